#include "linboot/spline_basis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "linboot/errors.hpp"

namespace linboot {

std::vector<double> TimeGrid::distinct() const {
  std::vector<double> out = obs_times;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

void validate_grid(const TimeGrid& grid, int degree) {
  if (grid.obs_times.empty()) throw DataError("time grid is empty");
  if (!std::is_sorted(grid.obs_times.begin(), grid.obs_times.end()))
    throw DataError("time grid must be sorted non-decreasing");
  for (double t : grid.obs_times)
    if (!std::isfinite(t)) throw DataError("time grid contains a non-finite time");
  if (grid.n_obs() < static_cast<std::size_t>(degree) + 1)
    throw DataError("time grid needs at least degree + 1 observations");
}

// Linear interpolation between order statistics (the common "type 7" rule).
double quantile_sorted(const std::vector<double>& v, double p) {
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

}  // namespace

std::vector<double> build_knots(int degree, int df, const TimeGrid& grid) {
  if (degree < 0) throw UsageError("spline degree must be non-negative");
  if (df <= degree) throw UsageError("spline df must exceed the degree");
  validate_grid(grid, degree);

  const std::vector<double> distinct = grid.distinct();
  const int n_interior = df - degree - 1;
  if (distinct.size() < 2 || distinct.size() < static_cast<std::size_t>(df)) {
    throw DataError("insufficient-support: " + std::to_string(distinct.size()) +
                    " distinct times for df=" + std::to_string(df) + " (" +
                    std::to_string(n_interior) + " interior knots)");
  }

  std::vector<double> knots;
  knots.reserve(static_cast<std::size_t>(df + degree + 1));
  knots.insert(knots.end(), static_cast<std::size_t>(degree + 1), distinct.front());
  for (int j = 1; j <= n_interior; ++j)
    knots.push_back(quantile_sorted(distinct, static_cast<double>(j) / (n_interior + 1)));
  knots.insert(knots.end(), static_cast<std::size_t>(degree + 1), distinct.back());
  return knots;
}

Eigen::VectorXd evaluate_basis(std::span<const double> knots, int degree, double t) {
  const int n_basis = static_cast<int>(knots.size()) - degree - 1;
  if (n_basis < 1) throw UsageError("knot vector too short for degree");
  const double lo = knots[static_cast<std::size_t>(degree)];
  const double hi = knots[static_cast<std::size_t>(n_basis)];
  if (!(t >= lo && t <= hi))
    throw DataError("evaluation time " + std::to_string(t) + " outside knot span [" +
                    std::to_string(lo) + ", " + std::to_string(hi) + "]");

  // Span index i with knots[i] <= t < knots[i+1]; the last span is closed.
  int span = n_basis - 1;
  if (t < hi) {
    const auto it = std::upper_bound(knots.begin() + degree, knots.begin() + n_basis + 1, t);
    span = static_cast<int>(it - knots.begin()) - 1;
  }

  // Nonzero functions N_{span-degree..span} by the triangular recurrence.
  std::vector<double> left(static_cast<std::size_t>(degree + 1));
  std::vector<double> right(static_cast<std::size_t>(degree + 1));
  std::vector<double> nz(static_cast<std::size_t>(degree + 1), 0.0);
  nz[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[j] = t - knots[static_cast<std::size_t>(span + 1 - j)];
    right[j] = knots[static_cast<std::size_t>(span + j)] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom == 0.0 ? 0.0 : nz[r] / denom;
      nz[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    nz[j] = saved;
  }

  Eigen::VectorXd row = Eigen::VectorXd::Zero(n_basis);
  for (int r = 0; r <= degree; ++r) row[span - degree + r] = nz[r];
  return row;
}

BasisMatrix basis_matrix(std::vector<double> knots, int degree, const TimeGrid& grid) {
  validate_grid(grid, degree);
  BasisMatrix out;
  out.degree = degree;
  out.df = static_cast<int>(knots.size()) - degree - 1;
  out.X.resize(static_cast<Eigen::Index>(grid.n_obs()), out.df);
  for (std::size_t i = 0; i < grid.n_obs(); ++i)
    out.X.row(static_cast<Eigen::Index>(i)) = evaluate_basis(knots, degree, grid.obs_times[i]).transpose();
  out.knots = std::move(knots);
  return out;
}

BasisMatrix make_basis(int degree, int df, const TimeGrid& grid) {
  return basis_matrix(build_knots(degree, df, grid), degree, grid);
}

LsFit ls_fit(const BasisMatrix& basis, const Eigen::VectorXd& y) {
  const Eigen::Index n = basis.X.rows();
  const Eigen::Index df = basis.X.cols();
  if (y.size() != n) throw DataError("ls_fit: observation vector length does not match basis rows");
  if (n < df + 1) throw DataError("ls_fit: need at least df + 1 observations");

  Eigen::MatrixXd design(n, df + 1);
  design.leftCols(df) = basis.X;
  design.col(df).setOnes();

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
  if (cod.rank() < df) {
    throw DataError("ls_fit: rank-deficient augmented design (rank " + std::to_string(cod.rank()) +
                    " < df " + std::to_string(df) + "); observation times do not support the basis");
  }
  const Eigen::VectorXd sol = cod.solve(y);

  LsFit fit;
  fit.coef = sol.head(df);
  fit.offset = sol[df];
  fit.residual_norm = (y - design * sol).norm();
  return fit;
}

LsFit ls_fit(const BasisMatrix& basis, std::span<const double> y) {
  return ls_fit(basis, Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())));
}

}  // namespace linboot
