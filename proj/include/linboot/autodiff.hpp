#pragma once

// Forward-mode derivative carriers for the generic objective kernels.
//
//   Dual<N>  value + gradient
//   Jet<N>   value + gradient + Hessian
//
// N is a compile-time size or Eigen::Dynamic. Kernels written against a scalar
// type T evaluate with double, Dual or Jet through the same code path.

#include <cmath>

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/polygamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

namespace linboot {

inline double digamma(double x) { return boost::math::digamma(x); }
inline double trigamma(double x) { return boost::math::trigamma(x); }
inline double tetragamma(double x) { return boost::math::polygamma(2, x); }
inline double lgamma(double x) { return std::lgamma(x); }

template <int N>
struct Dual {
  using Vec = Eigen::Matrix<double, N, 1>;

  double v = 0.0;
  Vec g;

  Dual() : g(Vec::Zero(N == Eigen::Dynamic ? 0 : N)) {}
  Dual(double value, Eigen::Index n) : v(value), g(Vec::Zero(n)) {}
  Dual(double value, Vec grad) : v(value), g(std::move(grad)) {}

  static Dual variable(double value, Eigen::Index n, Eigen::Index i) {
    Dual d(value, n);
    d.g[i] = 1.0;
    return d;
  }
  Eigen::Index size() const { return g.size(); }
};

template <int N>
struct Jet {
  using Vec = Eigen::Matrix<double, N, 1>;
  using Mat = Eigen::Matrix<double, N, N>;

  double v = 0.0;
  Vec g;
  Mat h;

  Jet() : g(Vec::Zero(N == Eigen::Dynamic ? 0 : N)), h(Mat::Zero(g.size(), g.size())) {}
  Jet(double value, Eigen::Index n) : v(value), g(Vec::Zero(n)), h(Mat::Zero(n, n)) {}

  static Jet variable(double value, Eigen::Index n, Eigen::Index i) {
    Jet j(value, n);
    j.g[i] = 1.0;
    return j;
  }
  Eigen::Index size() const { return g.size(); }
};

// ---------------------------------------------------------------------------
// Dual arithmetic

template <int N> Dual<N> operator+(const Dual<N>& a, const Dual<N>& b) { return {a.v + b.v, a.g + b.g}; }
template <int N> Dual<N> operator-(const Dual<N>& a, const Dual<N>& b) { return {a.v - b.v, a.g - b.g}; }
template <int N> Dual<N> operator-(const Dual<N>& a) { return {-a.v, -a.g}; }
template <int N> Dual<N> operator*(const Dual<N>& a, const Dual<N>& b) { return {a.v * b.v, b.v * a.g + a.v * b.g}; }
template <int N> Dual<N> operator+(const Dual<N>& a, double c) { return {a.v + c, a.g}; }
template <int N> Dual<N> operator+(double c, const Dual<N>& a) { return {a.v + c, a.g}; }
template <int N> Dual<N> operator-(const Dual<N>& a, double c) { return {a.v - c, a.g}; }
template <int N> Dual<N> operator-(double c, const Dual<N>& a) { return {c - a.v, -a.g}; }
template <int N> Dual<N> operator*(const Dual<N>& a, double c) { return {a.v * c, c * a.g}; }
template <int N> Dual<N> operator*(double c, const Dual<N>& a) { return {a.v * c, c * a.g}; }
template <int N> Dual<N> operator/(const Dual<N>& a, double c) { return {a.v / c, a.g / c}; }

template <int N>
Dual<N> chain(const Dual<N>& a, double f, double df) {
  return {f, df * a.g};
}
template <int N> Dual<N> operator/(const Dual<N>& a, const Dual<N>& b) {
  const double q = a.v / b.v;
  return {q, (a.g - q * b.g) / b.v};
}
template <int N> Dual<N> operator/(double c, const Dual<N>& b) { return chain(b, c / b.v, -c / (b.v * b.v)); }
template <int N> Dual<N> exp(const Dual<N>& a) { const double e = std::exp(a.v); return chain(a, e, e); }
template <int N> Dual<N> log(const Dual<N>& a) { return chain(a, std::log(a.v), 1.0 / a.v); }
template <int N> Dual<N> sqrt(const Dual<N>& a) { const double s = std::sqrt(a.v); return chain(a, s, 0.5 / s); }
template <int N> Dual<N> digamma(const Dual<N>& a) { return chain(a, digamma(a.v), trigamma(a.v)); }
template <int N> Dual<N> lgamma(const Dual<N>& a) { return chain(a, std::lgamma(a.v), digamma(a.v)); }

template <int N> Dual<N>& operator+=(Dual<N>& a, const Dual<N>& b) { a.v += b.v; a.g += b.g; return a; }
template <int N> Dual<N>& operator-=(Dual<N>& a, const Dual<N>& b) { a.v -= b.v; a.g -= b.g; return a; }
template <int N> Dual<N>& operator+=(Dual<N>& a, double c) { a.v += c; return a; }

// ---------------------------------------------------------------------------
// Jet arithmetic

template <int N> Jet<N> operator+(Jet<N> a, const Jet<N>& b) { a.v += b.v; a.g += b.g; a.h += b.h; return a; }
template <int N> Jet<N> operator-(Jet<N> a, const Jet<N>& b) { a.v -= b.v; a.g -= b.g; a.h -= b.h; return a; }
template <int N> Jet<N> operator-(Jet<N> a) { a.v = -a.v; a.g = -a.g; a.h = -a.h; return a; }
template <int N> Jet<N> operator+(Jet<N> a, double c) { a.v += c; return a; }
template <int N> Jet<N> operator+(double c, Jet<N> a) { a.v += c; return a; }
template <int N> Jet<N> operator-(Jet<N> a, double c) { a.v -= c; return a; }
template <int N> Jet<N> operator-(double c, const Jet<N>& a) { return c + (-a); }
template <int N> Jet<N> operator*(Jet<N> a, double c) { a.v *= c; a.g *= c; a.h *= c; return a; }
template <int N> Jet<N> operator*(double c, Jet<N> a) { return std::move(a) * c; }
template <int N> Jet<N> operator/(Jet<N> a, double c) { return std::move(a) * (1.0 / c); }

template <int N>
Jet<N> operator*(const Jet<N>& a, const Jet<N>& b) {
  Jet<N> out(a.v * b.v, a.size());
  out.g = b.v * a.g + a.v * b.g;
  out.h = b.v * a.h + a.v * b.h;
  out.h.noalias() += a.g * b.g.transpose();
  out.h.noalias() += b.g * a.g.transpose();
  return out;
}

/// f(a) given f, f', f'' at a.v.
template <int N>
Jet<N> chain(const Jet<N>& a, double f, double df, double d2f) {
  Jet<N> out(f, a.size());
  out.g = df * a.g;
  out.h = df * a.h;
  out.h.noalias() += d2f * (a.g * a.g.transpose());
  return out;
}

template <int N> Jet<N> operator/(double c, const Jet<N>& b) {
  const double inv = 1.0 / b.v;
  return chain(b, c * inv, -c * inv * inv, 2.0 * c * inv * inv * inv);
}
template <int N> Jet<N> operator/(const Jet<N>& a, const Jet<N>& b) { return a * (1.0 / b); }
template <int N> Jet<N> exp(const Jet<N>& a) { const double e = std::exp(a.v); return chain(a, e, e, e); }
template <int N> Jet<N> log(const Jet<N>& a) { return chain(a, std::log(a.v), 1.0 / a.v, -1.0 / (a.v * a.v)); }
template <int N> Jet<N> sqrt(const Jet<N>& a) {
  const double s = std::sqrt(a.v);
  return chain(a, s, 0.5 / s, -0.25 / (s * a.v));
}
template <int N> Jet<N> digamma(const Jet<N>& a) { return chain(a, digamma(a.v), trigamma(a.v), tetragamma(a.v)); }
template <int N> Jet<N> lgamma(const Jet<N>& a) { return chain(a, std::lgamma(a.v), digamma(a.v), trigamma(a.v)); }

template <int N> Jet<N>& operator+=(Jet<N>& a, const Jet<N>& b) { a.v += b.v; a.g += b.g; a.h += b.h; return a; }
template <int N> Jet<N>& operator-=(Jet<N>& a, const Jet<N>& b) { a.v -= b.v; a.g -= b.g; a.h -= b.h; return a; }
template <int N> Jet<N>& operator+=(Jet<N>& a, double c) { a.v += c; return a; }

// ---------------------------------------------------------------------------
// Scalar traits used by the kernels.

inline double value_of(double x) { return x; }
template <int N> double value_of(const Dual<N>& x) { return x.v; }
template <int N> double value_of(const Jet<N>& x) { return x.v; }

/// A constant of the same shape as `like` (zero derivatives).
inline double constant_like(double, double c) { return c; }
template <int N> Dual<N> constant_like(const Dual<N>& like, double c) { return Dual<N>(c, like.size()); }
template <int N> Jet<N> constant_like(const Jet<N>& like, double c) { return Jet<N>(c, like.size()); }

}  // namespace linboot
