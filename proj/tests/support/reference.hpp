#pragma once

// Independent straight-line implementations used as test oracles. Nothing
// here calls into the kernels under test.

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>

#include "linboot/autodiff.hpp"
#include "linboot/data_io.hpp"
#include "linboot/model.hpp"

namespace ref {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kPi = 3.14159265358979323846;

// Cox-de Boor recursion written directly from the definition.
inline double cox_de_boor(const std::vector<double>& t, int i, int p, double x, bool last_closed) {
  if (p == 0) {
    if (t[i] <= x && x < t[i + 1]) return 1.0;
    // Closed right end: x == t_max belongs to the last non-empty interval.
    if (last_closed && x == t.back() && t[i] < t[i + 1] && t[i + 1] == t.back()) return 1.0;
    return 0.0;
  }
  double left = 0.0;
  double right = 0.0;
  if (t[i + p] != t[i]) left = (x - t[i]) / (t[i + p] - t[i]) * cox_de_boor(t, i, p - 1, x, last_closed);
  if (t[i + p + 1] != t[i + 1])
    right = (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * cox_de_boor(t, i + 1, p - 1, x, last_closed);
  return left + right;
}

// Scalar-generic helpers so the same reference can run with autodiff scalars.
template <class T>
T sq(const T& x) {
  return x * x;
}

/// Explicit local factors on an unconstrained scale: zeta = softmax(logit),
/// b_mean = m, b_var = exp(log_v).
template <class T>
struct Locals {
  std::vector<std::vector<T>> logit, m, log_v;  // [gene][cluster]
};

/// Full KL(q || p) with explicit locals, coded term by term:
///   sticks: KL(Beta(a, b) || Beta(1, alpha)), computed from the densities;
///   beta, tau: minus log prior densities at the point masses;
///   per gene: E[log q(z)] - E[log p(z | nu)] + sum_k zeta_k (E[log q(b|k)] - E[log p(b)])
///             - w * sum_k zeta_k E[log p(y | beta_k, b, tau)].
/// Under per-gene weighting the whole gene block is multiplied by w.
template <class T>
T full_kl(const linboot::GlobalParams& gp, const Locals<T>& loc, const MatrixXd& y, const MatrixXd& X,
          const linboot::Priors& pr, const VectorXd& w, bool per_gene, const T& zero) {
  using boost::math::digamma;
  using std::exp;
  using std::log;
  const int K = gp.K();
  const Index ng = y.rows();
  const Index nt = y.cols();
  double kl_const = 0.0;

  // Sticks.
  std::vector<double> elog_nu(K, 0.0), elog_1mnu(K, 0.0);
  for (int k = 0; k + 1 < K; ++k) {
    const double a = gp.stick_a(k);
    const double b = gp.stick_b(k);
    elog_nu[k] = digamma(a) - digamma(a + b);
    elog_1mnu[k] = digamma(b) - digamma(a + b);
    const double log_beta_fn_q = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    const double e_log_q = -log_beta_fn_q + (a - 1.0) * elog_nu[k] + (b - 1.0) * elog_1mnu[k];
    const double log_beta_fn_p = std::lgamma(1.0) + std::lgamma(pr.alpha) - std::lgamma(1.0 + pr.alpha);
    const double e_log_p = -log_beta_fn_p + (pr.alpha - 1.0) * elog_1mnu[k];
    kl_const += e_log_q - e_log_p;
  }
  std::vector<double> elog_pi(K, 0.0);
  double acc = 0.0;
  for (int k = 0; k < K; ++k) {
    elog_pi[k] = acc + (k + 1 < K ? elog_nu[k] : 0.0);
    if (k + 1 < K) acc += elog_1mnu[k];
  }

  // Point masses: log prior densities.
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < gp.df(); ++i)
      kl_const -= -0.5 * std::log(2.0 * kPi * pr.beta_var) - sq(gp.beta(k, i) - pr.beta_mean) / (2.0 * pr.beta_var);
  const double tau = gp.tau();
  kl_const -= (pr.tau_shape - 1.0) * std::log(tau) - tau / pr.tau_scale - std::lgamma(pr.tau_shape) -
              pr.tau_shape * std::log(pr.tau_scale);

  T total = zero + kl_const;
  const MatrixXd fitted = gp.beta * X.transpose();  // K x nt
  for (Index g = 0; g < ng; ++g) {
    // softmax
    T mx = loc.logit[g][0];
    for (int k = 1; k < K; ++k)
      if (linboot::value_of(loc.logit[g][k]) > linboot::value_of(mx)) mx = loc.logit[g][k];
    T den = zero;
    for (int k = 0; k < K; ++k) den = den + exp(loc.logit[g][k] - mx);
    T gene = zero;
    for (int k = 0; k < K; ++k) {
      const T log_zeta = loc.logit[g][k] - mx - log(den);
      const T zeta = exp(log_zeta);
      const T& m = loc.m[g][k];
      const T v = exp(loc.log_v[g][k]);
      const T e_log_qz = zeta * log_zeta;
      const T e_log_pz = zeta * elog_pi[k];
      const T e_log_qb = -0.5 * log(2.0 * kPi * 2.718281828459045235 * v);
      const T e_log_pb = -0.5 * std::log(2.0 * kPi * pr.b_var) - (sq(m - pr.b_mean) + v) / (2.0 * pr.b_var);
      T e_loglik = zero;
      for (Index t = 0; t < nt; ++t)
        e_loglik = e_loglik - 0.5 * std::log(2.0 * kPi) + 0.5 * std::log(tau) -
                   0.5 * tau * (sq(y(g, t) - fitted(k, t) - m) + v);
      const double wl = per_gene ? 1.0 : w[g];
      gene = gene + e_log_qz - e_log_pz + zeta * (e_log_qb - e_log_pb) - wl * zeta * e_loglik;
    }
    total = total + (per_gene ? w[g] * gene : gene);
  }
  return total;
}

inline Locals<double> locals_from(const linboot::LocalParams& lp) {
  Locals<double> out;
  for (Index g = 0; g < lp.zeta.rows(); ++g) {
    std::vector<double> lz, m, lv;
    for (Index k = 0; k < lp.zeta.cols(); ++k) {
      lz.push_back(std::log(lp.zeta(g, k)));
      m.push_back(lp.b_mean(g, k));
      lv.push_back(std::log(lp.b_var(g, k)));
    }
    out.logit.push_back(lz);
    out.m.push_back(m);
    out.log_v.push_back(lv);
  }
  return out;
}

/// O(n_g^2) FM with ordered pairs including the diagonal.
inline double fm_brute(const MatrixXd& a, const MatrixXd& b) {
  double num = 0.0, aa = 0.0, bb = 0.0;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.rows(); ++j) {
      double A = 0.0, B = 0.0;
      for (Index k = 0; k < a.cols(); ++k) A += a(i, k) * a(j, k);
      for (Index k = 0; k < b.cols(); ++k) B += b(i, k) * b(j, k);
      num += A * B;
      aa += A * A;
      bb += B * B;
    }
  return num / std::sqrt(aa * bb);
}

/// Direct summation NMI of the joint P(k1, k2) = (1/n) sum_g a_gk1 b_gk2.
inline double nmi_brute(const MatrixXd& a, const MatrixXd& b) {
  const double n = static_cast<double>(a.rows());
  double mi = 0.0, ha = 0.0, hb = 0.0;
  for (Index k1 = 0; k1 < a.cols(); ++k1) {
    double pa = 0.0;
    for (Index g = 0; g < a.rows(); ++g) pa += a(g, k1) / n;
    if (pa > 0) ha -= pa * std::log(pa);
    for (Index k2 = 0; k2 < b.cols(); ++k2) {
      double pb = 0.0, pab = 0.0;
      for (Index g = 0; g < a.rows(); ++g) {
        pb += b(g, k2) / n;
        pab += a(g, k1) * b(g, k2) / n;
      }
      if (pab > 0) mi += pab * std::log(pab / (pa * pb));
    }
  }
  for (Index k2 = 0; k2 < b.cols(); ++k2) {
    double pb = 0.0;
    for (Index g = 0; g < a.rows(); ++g) pb += b(g, k2) / n;
    if (pb > 0) hb -= pb * std::log(pb);
  }
  return mi / std::sqrt(ha * hb);
}

inline MatrixXd random_soft(Index n, Index K, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  MatrixXd z(n, K);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < K; ++k) z(i, k) = u(rng);
    z.row(i) /= z.row(i).sum();
  }
  return z;
}

inline MatrixXd hard(const std::vector<int>& labels, Index K) {
  MatrixXd z = MatrixXd::Zero(static_cast<Index>(labels.size()), K);
  for (std::size_t i = 0; i < labels.size(); ++i) z(static_cast<Index>(i), labels[i]) = 1.0;
  return z;
}

/// Small seeded dataset drawn from the generative model.
inline linboot::Dataset small_dataset(int n_genes, int n_times, int n_reps, int K_true, int df, double separation,
                                      std::uint64_t seed, int degree = 3) {
  linboot::SimulationSpec spec;
  spec.n_genes = n_genes;
  spec.K_true = K_true;
  spec.degree = degree;
  spec.df = df;
  spec.separation = separation;
  spec.seed = seed;
  return linboot::simulate(spec, linboot::regular_grid(n_times, n_reps), linboot::Priors{}).data;
}

/// A random point of the free-parameter space near plausible values.
inline VectorXd random_eta(const linboot::Model& model, std::uint64_t seed, double spread = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const linboot::Layout& lay = model.layout();
  VectorXd eta(lay.dim());
  for (Index i = 0; i < eta.size(); ++i) eta[i] = 0.5 * spread * nd(rng);
  for (int k = 0; k < lay.K; ++k)
    for (int i = 0; i < lay.df; ++i) eta[lay.beta(k, i)] = model.priors().beta_mean + 2.0 * spread * nd(rng);
  eta[lay.log_tau()] = 0.3 * nd(rng);
  return eta;
}

/// Adjusted Rand index of two hard labelings.
inline double adjusted_rand(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, double> nij;
  std::map<int, double> ai, bj;
  for (std::size_t i = 0; i < a.size(); ++i) {
    nij[{a[i], b[i]}] += 1;
    ai[a[i]] += 1;
    bj[b[i]] += 1;
  }
  auto c2 = [](double x) { return x * (x - 1) / 2; };
  double s = 0, sa = 0, sb = 0;
  for (auto& [k, v] : nij) s += c2(v);
  for (auto& [k, v] : ai) sa += c2(v);
  for (auto& [k, v] : bj) sb += c2(v);
  const double expected = sa * sb / c2(static_cast<double>(a.size()));
  const double mx = 0.5 * (sa + sb);
  return (s - expected) / (mx - expected);
}

}  // namespace ref
