#include "linboot/model.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "linboot/errors.hpp"

namespace linboot {

void Priors::validate() const {
  if (!(alpha > 0.0)) throw UsageError("prior alpha must be positive");
  if (!(beta_var > 0.0) || !(b_var > 0.0)) throw UsageError("prior variances must be positive");
  if (!(tau_shape > 0.0) || !(tau_scale > 0.0)) throw UsageError("Gamma shape and scale must be positive");
  if (!std::isfinite(beta_mean) || !std::isfinite(b_mean)) throw UsageError("prior means must be finite");
}

void GlobalParams::set_stick(int k, double a, double b) {
  log_stick_a[k] = std::log(a);
  log_stick_b[k] = std::log(b);
}

FreeVector pack(const GlobalParams& g) {
  const Layout lay{g.K(), g.df()};
  if (g.log_stick_a.size() != lay.n_sticks() || g.log_stick_b.size() != lay.n_sticks())
    throw DataError("stick parameter count must be K - 1");
  FreeVector eta(lay.dim());
  eta.segment(0, lay.n_sticks()) = g.log_stick_a;
  eta.segment(lay.n_sticks(), lay.n_sticks()) = g.log_stick_b;
  for (int k = 0; k < lay.K; ++k) eta.segment(lay.beta(k, 0), lay.df) = g.beta.row(k).transpose();
  eta[lay.log_tau()] = g.log_tau;
  if (!eta.allFinite()) throw NumericalError("pack: global parameters contain non-finite entries");
  return eta;
}

GlobalParams unpack(const FreeVector& eta, int K, int df) {
  const Layout lay{K, df};
  if (eta.size() != lay.dim())
    throw DataError("unpack: free vector has " + std::to_string(eta.size()) + " entries, expected " +
                    std::to_string(lay.dim()));
  if (!eta.allFinite()) throw NumericalError("unpack: free vector contains non-finite entries");
  GlobalParams g;
  g.log_stick_a = eta.segment(0, lay.n_sticks());
  g.log_stick_b = eta.segment(lay.n_sticks(), lay.n_sticks());
  g.beta.resize(K, df);
  for (int k = 0; k < K; ++k) g.beta.row(k) = eta.segment(lay.beta(k, 0), df).transpose();
  g.log_tau = eta[lay.log_tau()];
  return g;
}

void Dataset::validate() const {
  if (y.rows() < 1) throw DataError("dataset has no genes");
  if (static_cast<std::size_t>(y.cols()) != grid.n_obs())
    throw DataError("expression matrix columns do not match the time grid");
  if (basis.X.rows() != y.cols()) throw DataError("basis rows do not match observation columns");
  if (!y.allFinite()) throw DataError("expression matrix contains missing or non-finite values");
  if (!gene_ids.empty() && static_cast<Eigen::Index>(gene_ids.size()) != y.rows())
    throw DataError("gene id count does not match expression rows");
}

Model::Model(Dataset data, Priors priors, int K, Weighting weighting)
    : data_(std::move(data)), priors_(priors), weighting_(weighting) {
  if (K < 1) throw UsageError("truncation level K must be at least 1");
  priors_.validate();
  data_.validate();
  layout_ = Layout{K, data_.basis.df};
  const Eigen::MatrixXd& X = data_.basis.X;
  xtx_ = X.transpose() * X;
  xt1_ = X.colwise().sum().transpose();
  xty_ = data_.y * X;
  yy_ = data_.y.rowwise().squaredNorm();
  sy_ = data_.y.rowwise().sum();
}

Model Model::with_weighting(Weighting w) const {
  Model out = *this;
  out.weighting_ = w;
  return out;
}

Eigen::VectorXd stick_proportions(std::span<const double> nu) {
  Eigen::VectorXd pi(static_cast<Eigen::Index>(nu.size()) + 1);
  double remaining = 1.0;
  for (std::size_t k = 0; k < nu.size(); ++k) {
    pi[static_cast<Eigen::Index>(k)] = nu[k] * remaining;
    remaining *= 1.0 - nu[k];
  }
  pi[static_cast<Eigen::Index>(nu.size())] = remaining;
  return pi;
}

WeightVector unit_weights(Eigen::Index n_genes) { return WeightVector::Ones(n_genes); }

namespace {

struct ClusterSummaries {
  std::vector<double> elog_pi;
  std::vector<double> q;
  std::vector<double> s;
  Eigen::MatrixXd a;  // n_g x K
};

ClusterSummaries summarize(const GlobalParams& g, const Model& model) {
  ClusterSummaries out;
  const std::span<const double> la(g.log_stick_a.data(), static_cast<std::size_t>(g.log_stick_a.size()));
  const std::span<const double> lb(g.log_stick_b.data(), static_cast<std::size_t>(g.log_stick_b.size()));
  out.elog_pi = kernels::expected_log_pi(la, lb, 0.0);
  out.q.resize(static_cast<std::size_t>(g.K()));
  out.s.resize(static_cast<std::size_t>(g.K()));
  for (int k = 0; k < g.K(); ++k) {
    const Eigen::VectorXd b = g.beta.row(k).transpose();
    out.q[k] = b.dot(model.XtX() * b);
    out.s[k] = b.dot(model.Xt1());
  }
  out.a = model.Xty() * g.beta.transpose();
  return out;
}

void check_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericalError("marginal_kl: non-finite " + what);
}

double global_terms(const GlobalParams& g, const Model& model) {
  const std::span<const double> la(g.log_stick_a.data(), static_cast<std::size_t>(g.log_stick_a.size()));
  const std::span<const double> lb(g.log_stick_b.data(), static_cast<std::size_t>(g.log_stick_b.size()));
  const double sticks = kernels::stick_kl(la, lb, model.priors().alpha, 0.0);
  check_finite(sticks, "stick KL term");
  double beta = 0.0;
  for (int k = 0; k < g.K(); ++k) {
    const Eigen::VectorXd row = g.beta.row(k).transpose();
    beta += kernels::beta_prior(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
                                model.priors(), 0.0);
  }
  check_finite(beta, "cluster coefficient prior term");
  const double tau = kernels::tau_prior(g.log_tau, model.priors());
  check_finite(tau, "noise precision prior term");
  return sticks + beta + tau;
}

double gene_term(const ClusterSummaries& cs, const GlobalParams& g, const Model& model, Eigen::Index gene,
                 double w) {
  const bool per_gene = model.weighting() == Weighting::per_gene;
  const double w_cost = per_gene ? 1.0 : w;
  const kernels::GeneScalars gs = model.gene_scalars(gene);
  std::vector<double> v(static_cast<std::size_t>(g.K()));
  for (int k = 0; k < g.K(); ++k)
    v[k] = cs.elog_pi[k] - kernels::cluster_cost(cs.a(gene, k), cs.q[k], cs.s[k], g.log_tau, w_cost, gs, model.priors());
  const double term = kernels::neg_log_sum_exp(v);
  return per_gene ? w * term : term;
}

void check_weights(const WeightVector& w, const Model& model) {
  if (w.size() != model.n_genes())
    throw DataError("weight vector has " + std::to_string(w.size()) + " entries for " +
                    std::to_string(model.n_genes()) + " genes");
  for (Eigen::Index g = 0; g < w.size(); ++g)
    if (!(w[g] >= 0.0) || !std::isfinite(w[g])) throw DataError("weights must be finite and non-negative");
}

}  // namespace

LocalParams local_update(const GlobalParams& g, const Model& model, const WeightVector& w) {
  check_weights(w, model);
  const ClusterSummaries cs = summarize(g, model);
  const Priors& pr = model.priors();
  const double tau = g.tau();
  const double n = static_cast<double>(model.data().n_obs());
  const int K = g.K();
  const Eigen::Index ng = model.n_genes();
  const bool per_gene = model.weighting() == Weighting::per_gene;

  LocalParams out;
  out.zeta.resize(ng, K);
  out.b_mean.resize(ng, K);
  out.b_var.resize(ng, K);
  std::vector<double> v(static_cast<std::size_t>(K));
  for (Eigen::Index gene = 0; gene < ng; ++gene) {
    const double wg = per_gene ? 1.0 : w[gene];
    const kernels::GeneScalars gs = model.gene_scalars(gene);
    const double prec = 1.0 / pr.b_var + wg * n * tau;
    double vmax = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      const double sum_resid = gs.sy - cs.s[k];
      out.b_var(gene, k) = 1.0 / prec;
      out.b_mean(gene, k) = (pr.b_mean / pr.b_var + wg * tau * sum_resid) / prec;
      v[k] = cs.elog_pi[k] - kernels::cluster_cost(cs.a(gene, k), cs.q[k], cs.s[k], g.log_tau, wg, gs, pr);
      vmax = std::max(vmax, v[k]);
    }
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
      out.zeta(gene, k) = std::exp(v[k] - vmax);
      total += out.zeta(gene, k);
    }
    out.zeta.row(gene) /= total;
  }
  return out;
}

double marginal_kl(const FreeVector& eta, const WeightVector& w, const Model& model, Execution exec) {
  check_weights(w, model);
  const GlobalParams g = unpack(eta, model.K(), model.df());
  const ClusterSummaries cs = summarize(g, model);
  const Eigen::Index ng = model.n_genes();
  std::vector<double> partial(static_cast<std::size_t>(chunk_count(ng)), 0.0);
  for_each_chunk(ng, exec, [&](Eigen::Index c, Eigen::Index begin, Eigen::Index end) {
    double acc = 0.0;
    for (Eigen::Index gene = begin; gene < end; ++gene) acc += gene_term(cs, g, model, gene, w[gene]);
    partial[static_cast<std::size_t>(c)] = acc;
  });
  double total = global_terms(g, model);
  for (double p : partial) total += p;
  if (!std::isfinite(total)) {
    for (Eigen::Index gene = 0; gene < ng; ++gene)
      check_finite(gene_term(cs, g, model, gene, w[gene]), "likelihood term of gene " + std::to_string(gene));
    throw NumericalError("marginal_kl: non-finite total");
  }
  return total;
}

double marginal_kl_serial(const FreeVector& eta, const WeightVector& w, const Model& model) {
  check_weights(w, model);
  const GlobalParams g = unpack(eta, model.K(), model.df());
  const ClusterSummaries cs = summarize(g, model);
  double total = global_terms(g, model);
  for (Eigen::Index gene = 0; gene < model.n_genes(); ++gene) {
    const double t = gene_term(cs, g, model, gene, w[gene]);
    check_finite(t, "likelihood term of gene " + std::to_string(gene));
    total += t;
  }
  return total;
}

Eigen::MatrixXd cluster_probs(const FreeVector& eta, const Model& model, const WeightVector& w) {
  return local_update(unpack(eta, model.K(), model.df()), model, w).zeta;
}

}  // namespace linboot
