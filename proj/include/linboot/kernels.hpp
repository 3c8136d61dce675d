#pragma once

// Scalar-generic building blocks of the marginal KL objective. Every function
// is a template over the scalar type so the same expressions are evaluated
// with double, Dual<N> or Jet<N>.
//
// Constant convention: all terms are exact (including 2*pi normalizers and the
// Gamma/Beta log-normalizers) except the entropies of the point masses on the
// cluster coefficients and the noise precision, which are dropped, and the
// log evidence log p(Y), which does not depend on the variational parameters.

#include <cmath>
#include <span>
#include <vector>

#include "linboot/autodiff.hpp"

namespace linboot {

struct Priors {
  double alpha = 2.0;        // DP concentration
  double beta_mean = 0.38;   // prior mean of each spline coefficient
  double beta_var = 10.0;    // prior variance of each coefficient (precision 0.1)
  double b_mean = 0.0;       // offset prior mean
  double b_var = 10.0;       // offset prior variance
  double tau_shape = 0.1;    // Gamma shape for the noise precision
  double tau_scale = 10.0;   // Gamma scale

  void validate() const;
};

/// How per-gene weights enter the objective.
///   likelihood: only the log-likelihood of y_g is multiplied by w_g.
///   per_gene:   the whole per-gene contribution (local prior, entropy and
///               likelihood) is multiplied by w_g, so integer weights behave
///               exactly like physically repeating genes.
enum class Weighting { likelihood, per_gene };

namespace kernels {

inline constexpr double kLog2Pi = 1.8378770664093454836;

/// E_q[log pi_k] for k = 0..K-1 from log Beta parameters of the K-1 free
/// sticks; the last stick is fixed at 1.
template <class T>
std::vector<T> expected_log_pi(std::span<const T> log_a, std::span<const T> log_b, const T& zero) {
  using std::exp;
  std::vector<T> out;
  out.reserve(log_a.size() + 1);
  T cum = zero;
  for (std::size_t k = 0; k < log_a.size(); ++k) {
    const T a = exp(log_a[k]);
    const T b = exp(log_b[k]);
    const T dab = digamma(a + b);
    out.push_back(cum + (digamma(a) - dab));
    cum = cum + (digamma(b) - dab);
  }
  out.push_back(cum);
  return out;
}

/// Sum over free sticks of KL(Beta(a, b) || Beta(1, alpha)).
template <class T>
T stick_kl(std::span<const T> log_a, std::span<const T> log_b, double alpha, const T& zero) {
  using std::exp;
  using std::log;
  T total = zero;
  for (std::size_t k = 0; k < log_a.size(); ++k) {
    const T a = exp(log_a[k]);
    const T b = exp(log_b[k]);
    const T ab = a + b;
    const T dab = digamma(ab);
    const T db = digamma(b);
    const T neg_entropy = lgamma(ab) - lgamma(a) - lgamma(b) + (a - 1.0) * digamma(a) + (b - 1.0) * db -
                          (ab - 2.0) * dab;
    const T log_prior = (db - dab) * (alpha - 1.0) + std::log(alpha);
    total = total + (neg_entropy - log_prior);
  }
  return total;
}

/// -log N(beta_k; beta_mean, beta_var I) for one cluster's coefficients.
template <class T>
T beta_prior(std::span<const T> beta_row, const Priors& pr, const T& zero) {
  T total = zero;
  for (const T& b : beta_row) {
    const T d = b - pr.beta_mean;
    total = total + d * d * (0.5 / pr.beta_var);
  }
  return total + 0.5 * static_cast<double>(beta_row.size()) * (kLog2Pi + std::log(pr.beta_var));
}

/// -log Gamma(tau; shape, scale) at tau = exp(log_tau).
template <class T>
T tau_prior(const T& log_tau, const Priors& pr) {
  using std::exp;
  return exp(log_tau) / pr.tau_scale - log_tau * (pr.tau_shape - 1.0) +
         (std::lgamma(pr.tau_shape) + pr.tau_shape * std::log(pr.tau_scale));
}

/// Per-gene sufficient statistics: yy = y'y, sy = 1'y.
struct GeneScalars {
  double yy = 0.0;
  double sy = 0.0;
  double n_obs = 0.0;
};

/// Minimum over q(b_g | z_gk = 1) = N(m, v) of
///   KL(N(m, v) || prior) - w * E[log N(y_g; X beta_k + b, tau^-1 I)]
/// expressed through a = beta_k' X'y_g, q = beta_k' X'X beta_k, s = 1'X beta_k.
/// The minimizer has precision P = 1/b_var + w n tau and mean
/// (b_mean/b_var + w tau sum(r)) / P with r = y_g - X beta_k.
template <class T>
T cluster_cost(const T& a, const T& q, const T& s, const T& log_tau, const T& w, const GeneScalars& gs,
               const Priors& pr) {
  using std::exp;
  using std::log;
  const T wt = w * exp(log_tau);
  const T prec = wt * gs.n_obs + 1.0 / pr.b_var;
  const T sq_resid = q - 2.0 * a + gs.yy;
  const T sum_resid = gs.sy - s;
  const T lin = wt * sum_resid + pr.b_mean / pr.b_var;
  return 0.5 * log(prec * pr.b_var) + 0.5 * (wt * sq_resid - lin * lin / prec) +
         0.5 * (pr.b_mean * pr.b_mean / pr.b_var) + w * (0.5 * gs.n_obs) * (kLog2Pi - log_tau);
}

/// -log sum exp(v) with max-shift stabilization.
template <class T>
T neg_log_sum_exp(const std::vector<T>& v) {
  using std::exp;
  using std::log;
  double vmax = value_of(v.front());
  for (const T& x : v) vmax = std::max(vmax, value_of(x));
  T acc = exp(v.front() - vmax);
  for (std::size_t k = 1; k < v.size(); ++k) acc = acc + exp(v[k] - vmax);
  return -(log(acc) + vmax);
}

}  // namespace kernels
}  // namespace linboot
