#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "linboot/kernels.hpp"
#include "linboot/parallel.hpp"
#include "linboot/spline_basis.hpp"

namespace linboot {

/// Unconstrained parameter vector eta. Layout (K clusters, df coefficients):
///   [ log stick_a (K-1) | log stick_b (K-1) | beta row-major (K*df) | log tau ]
using FreeVector = Eigen::VectorXd;
/// Per-gene weights w_g >= 0; all ones reproduces the unweighted model.
using WeightVector = Eigen::VectorXd;

struct Layout {
  int K = 1;
  int df = 1;

  Eigen::Index n_sticks() const { return K - 1; }
  Eigen::Index log_a(int k) const { return k; }
  Eigen::Index log_b(int k) const { return n_sticks() + k; }
  Eigen::Index beta(int k, int i) const { return 2 * n_sticks() + static_cast<Eigen::Index>(k) * df + i; }
  Eigen::Index beta_begin() const { return 2 * n_sticks(); }
  Eigen::Index log_tau() const { return 2 * n_sticks() + static_cast<Eigen::Index>(K) * df; }
  Eigen::Index dim() const { return log_tau() + 1; }
};

/// Global variational parameters: Beta factors for the sticks, point-mass
/// locations for the cluster coefficients and for the noise precision.
/// Stick parameters are stored on the log scale so packing is an exact copy.
struct GlobalParams {
  Eigen::VectorXd log_stick_a;  // K-1
  Eigen::VectorXd log_stick_b;  // K-1
  Eigen::MatrixXd beta;         // K x df
  double log_tau = 0.0;

  int K() const { return static_cast<int>(beta.rows()); }
  int df() const { return static_cast<int>(beta.cols()); }
  double stick_a(int k) const { return std::exp(log_stick_a[k]); }
  double stick_b(int k) const { return std::exp(log_stick_b[k]); }
  void set_stick(int k, double a, double b);
  double tau() const { return std::exp(log_tau); }
  double sigma2() const { return std::exp(-log_tau); }
};

FreeVector pack(const GlobalParams& g);
GlobalParams unpack(const FreeVector& eta, int K, int df);

/// Per-gene local factors q(z_g) and q(b_g | z_gk = 1).
struct LocalParams {
  Eigen::MatrixXd zeta;    // n_g x K, rows sum to one
  Eigen::MatrixXd b_mean;  // n_g x K
  Eigen::MatrixXd b_var;   // n_g x K
};

struct Dataset {
  Eigen::MatrixXd y;  // n_g x n_obs
  TimeGrid grid;
  BasisMatrix basis;
  std::vector<std::string> gene_ids;

  Eigen::Index n_genes() const { return y.rows(); }
  Eigen::Index n_obs() const { return y.cols(); }
  void validate() const;
};

/// Dataset, priors and truncation level with the sufficient statistics the
/// objective needs. Immutable after construction.
class Model {
 public:
  Model(Dataset data, Priors priors, int K, Weighting weighting = Weighting::likelihood);

  const Dataset& data() const { return data_; }
  const Priors& priors() const { return priors_; }
  Weighting weighting() const { return weighting_; }
  int K() const { return layout_.K; }
  int df() const { return layout_.df; }
  const Layout& layout() const { return layout_; }
  Eigen::Index dim() const { return layout_.dim(); }
  Eigen::Index n_genes() const { return data_.n_genes(); }

  const Eigen::MatrixXd& XtX() const { return xtx_; }
  const Eigen::VectorXd& Xt1() const { return xt1_; }
  const Eigen::MatrixXd& Xty() const { return xty_; }  // n_g x df
  kernels::GeneScalars gene_scalars(Eigen::Index g) const {
    return {yy_[g], sy_[g], static_cast<double>(data_.n_obs())};
  }

  /// Same data and priors with another weighting convention.
  Model with_weighting(Weighting w) const;

 private:
  Dataset data_;
  Priors priors_;
  Weighting weighting_;
  Layout layout_;
  Eigen::MatrixXd xtx_;
  Eigen::VectorXd xt1_;
  Eigen::MatrixXd xty_;
  Eigen::VectorXd yy_;
  Eigen::VectorXd sy_;
};

/// Stick-breaking proportions pi_k = nu_k prod_{j<k} (1 - nu_j) with nu_K = 1.
Eigen::VectorXd stick_proportions(std::span<const double> nu);

/// Closed-form coordinate minimizer of the weighted KL over the local factors
/// at fixed globals. Under per-gene weighting the minimizer does not depend on
/// w_g > 0 and the unit-weight solution is returned for every gene.
LocalParams local_update(const GlobalParams& g, const Model& model, const WeightVector& w);

/// KL(q || p) as a function of the globals only, with the locals at their
/// closed-form optimum. Throws NumericalError naming the offending term when
/// a term is not finite.
double marginal_kl(const FreeVector& eta, const WeightVector& w, const Model& model,
                   Execution exec = Execution::parallel);

/// Plain gene-ordered loop; reference for the chunked kernel.
double marginal_kl_serial(const FreeVector& eta, const WeightVector& w, const Model& model);

/// Posterior cluster probabilities zeta at eta and weights w.
Eigen::MatrixXd cluster_probs(const FreeVector& eta, const Model& model, const WeightVector& w);

WeightVector unit_weights(Eigen::Index n_genes);

/// The objective written once against a scalar type T (double, Dual, Jet).
/// `eta` has Layout::dim() entries, `w` one per gene.
template <class T>
T marginal_kl_generic(std::span<const T> eta, std::span<const T> w, const Model& model) {
  const Layout& lay = model.layout();
  const int K = lay.K;
  const int df = lay.df;
  const T zero = constant_like(eta[0], 0.0);
  const std::span<const T> log_a = eta.subspan(0, static_cast<std::size_t>(lay.n_sticks()));
  const std::span<const T> log_b =
      eta.subspan(static_cast<std::size_t>(lay.n_sticks()), static_cast<std::size_t>(lay.n_sticks()));
  const T& log_tau = eta[static_cast<std::size_t>(lay.log_tau())];

  T total = kernels::stick_kl(log_a, log_b, model.priors().alpha, zero);
  for (int k = 0; k < K; ++k)
    total = total + kernels::beta_prior(eta.subspan(static_cast<std::size_t>(lay.beta(k, 0)), df), model.priors(), zero);
  total = total + kernels::tau_prior(log_tau, model.priors());

  const std::vector<T> elog_pi = kernels::expected_log_pi(log_a, log_b, zero);
  std::vector<T> q(static_cast<std::size_t>(K), zero);
  std::vector<T> s(static_cast<std::size_t>(K), zero);
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < df; ++i) {
      const T& bi = eta[static_cast<std::size_t>(lay.beta(k, i))];
      s[k] = s[k] + bi * model.Xt1()[i];
      T row = zero;
      for (int j = 0; j < df; ++j) row = row + eta[static_cast<std::size_t>(lay.beta(k, j))] * model.XtX()(i, j);
      q[k] = q[k] + bi * row;
    }
  }

  const bool per_gene = model.weighting() == Weighting::per_gene;
  for (Eigen::Index g = 0; g < model.n_genes(); ++g) {
    const kernels::GeneScalars gs = model.gene_scalars(g);
    const T w_cost = per_gene ? constant_like(zero, 1.0) : w[static_cast<std::size_t>(g)];
    std::vector<T> v;
    v.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      T a = zero;
      for (int i = 0; i < df; ++i) a = a + eta[static_cast<std::size_t>(lay.beta(k, i))] * model.Xty()(g, i);
      v.push_back(elog_pi[k] - kernels::cluster_cost(a, q[k], s[k], log_tau, w_cost, gs, model.priors()));
    }
    const T term = kernels::neg_log_sum_exp(v);
    total = total + (per_gene ? w[static_cast<std::size_t>(g)] * term : term);
  }
  return total;
}

}  // namespace linboot
