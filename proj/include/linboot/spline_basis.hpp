#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace linboot {

/// Observation times, one per column of the expression matrix. Replicates
/// repeat a time; the vector is sorted non-decreasing.
struct TimeGrid {
  std::vector<double> obs_times;

  std::size_t n_obs() const { return obs_times.size(); }
  std::vector<double> distinct() const;
  double front() const { return obs_times.front(); }
  double back() const { return obs_times.back(); }
};

/// Clamped B-spline design matrix evaluated at a TimeGrid.
struct BasisMatrix {
  Eigen::MatrixXd X;  // n_obs x df
  std::vector<double> knots;
  int degree = 0;
  int df = 0;
};

/// Clamped knot vector of length df + degree + 1. Boundary knots are repeated
/// degree + 1 times; the df - degree - 1 interior knots sit at evenly spaced
/// quantiles (linear interpolation between order statistics) of the distinct
/// observation times.
///
/// Throws DataError("insufficient-support ...") when the grid has fewer than
/// df distinct times or a zero-length span.
std::vector<double> build_knots(int degree, int df, const TimeGrid& grid);

/// Values of all basis functions at t. Intervals are half-open except the last,
/// which is closed so t equal to the right boundary is inside the span.
Eigen::VectorXd evaluate_basis(std::span<const double> knots, int degree, double t);

BasisMatrix basis_matrix(std::vector<double> knots, int degree, const TimeGrid& grid);

/// Convenience: knots plus design matrix.
BasisMatrix make_basis(int degree, int df, const TimeGrid& grid);

struct LsFit {
  Eigen::VectorXd coef;
  double offset = 0.0;
  double residual_norm = 0.0;
};

/// Least squares of y against X*coef + offset. The offset is an appended
/// intercept column. A full partition-of-unity basis already spans the
/// constants, so the augmented design has a one-dimensional null space
/// (coef + c*1, offset - c); the minimum-norm solution is returned, which
/// satisfies sum(coef) == offset. Any further rank loss is an error.
LsFit ls_fit(const BasisMatrix& basis, std::span<const double> y);
LsFit ls_fit(const BasisMatrix& basis, const Eigen::VectorXd& y);

}  // namespace linboot
