#pragma once

#include <stdexcept>
#include <string>

namespace linboot {

/// Malformed or inconsistent input data (CSV schema, archive mismatch, bad sizes).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite objective terms, failed factorizations, unconverged fits.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument combination.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace linboot
