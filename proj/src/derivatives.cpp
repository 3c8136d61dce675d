#include "linboot/derivatives.hpp"

#include <cmath>
#include <type_traits>
#include <vector>

#include "linboot/errors.hpp"

namespace linboot {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Intermediate space u = (E log pi, q, s, log tau, beta) through which every
// gene term depends on eta. a_gk = beta_k' X'y_g is expanded per gene.
struct USpace {
  int K;
  int df;
  Index e(int k) const { return k; }
  Index q(int k) const { return K + k; }
  Index s(int k) const { return 2 * K + k; }
  Index lt() const { return 3 * K; }
  Index beta(int k) const { return 3 * K + 1 + static_cast<Index>(k) * df; }
  Index dim() const { return 3 * K + 1 + static_cast<Index>(K) * df; }
};

// Local coordinates of one (gene, cluster) leaf: e, a, q, s, log tau.
using Local5 = Eigen::Matrix<double, 5, 1>;
using Local55 = Eigen::Matrix<double, 5, 5>;

struct Context {
  std::vector<double> elog_pi;
  std::vector<double> q;
  std::vector<double> s;
  MatrixXd a;  // n_g x K
  double log_tau = 0.0;
};

struct Accumulator {
  double value = 0.0;
  VectorXd du;
  MatrixXd hu;

  Accumulator(Index dim_u, bool hess) : du(VectorXd::Zero(dim_u)) {
    if (hess) hu = MatrixXd::Zero(dim_u, dim_u);
  }
  void merge(const Accumulator& o) {
    value += o.value;
    du += o.du;
    if (hu.size() > 0) hu += o.hu;
  }
};

template <class Out>
void scatter_vec(Out&& out, const USpace& us, int k, const Local5& loc, const VectorXd& xty, double scale) {
  out[us.e(k)] += scale * loc[0];
  out.segment(us.beta(k), us.df) += (scale * loc[1]) * xty;
  out[us.q(k)] += scale * loc[2];
  out[us.s(k)] += scale * loc[3];
  out[us.lt()] += scale * loc[4];
}

void scatter_mat(MatrixXd& H, const USpace& us, int k, const Local55& L, const VectorXd& xty, double scale) {
  const Index idx[5] = {us.e(k), -1, us.q(k), us.s(k), us.lt()};
  const Index b0 = us.beta(k);
  constexpr int plain[4] = {0, 2, 3, 4};
  for (int i : plain)
    for (int j : plain) H(idx[i], idx[j]) += scale * L(i, j);
  for (int j : plain) {
    H.block(b0, idx[j], us.df, 1) += (scale * L(1, j)) * xty;
    H.block(idx[j], b0, 1, us.df) += (scale * L(j, 1)) * xty.transpose();
  }
  H.block(b0, b0, us.df, us.df).noalias() += (scale * L(1, 1)) * (xty * xty.transpose());
}

template <class C>
constexpr bool kSecondOrder = std::is_same_v<C, Jet<5>>;

// Contribution of one gene. `cross_col` (dim_u) receives d/dw_g of the
// u-gradient when non-null.
template <class C>
void gene_kernel(const Model& model, const USpace& us, const Context& ctx, Index g, double wg, bool want_hess,
                 Accumulator& acc, double* cross_col) {
  const int K = us.K;
  const bool per_gene = model.weighting() == Weighting::per_gene;
  const double w_cost = per_gene ? 1.0 : wg;
  const double scale = per_gene ? wg : 1.0;
  const kernels::GeneScalars gs = model.gene_scalars(g);
  const VectorXd xty = model.Xty().row(g).transpose();

  std::vector<C> c;
  c.reserve(static_cast<std::size_t>(K));
  std::vector<double> v(static_cast<std::size_t>(K));
  double vmax = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k) {
    const C a = C::variable(ctx.a(g, k), 5, 0);
    const C q = C::variable(ctx.q[k], 5, 1);
    const C s = C::variable(ctx.s[k], 5, 2);
    const C lt = C::variable(ctx.log_tau, 5, 3);
    const C w = C::variable(w_cost, 5, 4);
    c.push_back(kernels::cluster_cost(a, q, s, lt, w, gs, model.priors()));
    v[k] = ctx.elog_pi[k] - c[k].v;
    vmax = std::max(vmax, v[k]);
  }
  std::vector<double> p(static_cast<std::size_t>(K));
  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    p[k] = std::exp(v[k] - vmax);
    total += p[k];
  }
  for (double& pk : p) pk /= total;
  const double phi = -(std::log(total) + vmax);
  acc.value += scale * phi;

  // mu = -grad_u(phi) = sum_k p_k J_k, J_k the u-gradient of v_k.
  VectorXd mu = VectorXd::Zero(us.dim());
  std::vector<Local5> J(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    J[k] << 1.0, -c[k].g[0], -c[k].g[1], -c[k].g[2], -c[k].g[3];
    scatter_vec(mu, us, k, J[k], xty, p[k]);
  }
  acc.du -= scale * mu;

  if constexpr (kSecondOrder<C>) {
    if (want_hess) {
      acc.hu.noalias() += scale * (mu * mu.transpose());
      for (int k = 0; k < K; ++k) {
        Local55 L = Local55::Zero();
        L.bottomRightCorner<4, 4>() = c[k].h.template topLeftCorner<4, 4>();
        L -= J[k] * J[k].transpose();
        scatter_mat(acc.hu, us, k, p[k] * L, xty, scale);
      }
    }
    if (cross_col != nullptr) {
      Eigen::Map<VectorXd> col(cross_col, us.dim());
      if (per_gene) {
        col = -mu;
      } else {
        double m_w = 0.0;
        for (int k = 0; k < K; ++k) m_w -= p[k] * c[k].g[4];
        col = m_w * mu;
        for (int k = 0; k < K; ++k) {
          Local5 ell = c[k].g[4] * J[k];
          ell.tail<4>() += c[k].h.col(4).template head<4>();
          scatter_vec(col, us, k, ell, xty, p[k]);
        }
      }
    }
  } else {
    (void)want_hess;
    (void)cross_col;
  }
}

template <class S>
struct StickBlock {
  std::vector<S> elog_pi;
  S kl;
};

template <class S>
StickBlock<S> stick_block(const FreeVector& eta, const Model& model) {
  const Layout& lay = model.layout();
  const Index ns = lay.n_sticks();
  std::vector<S> la;
  std::vector<S> lb;
  for (Index k = 0; k < ns; ++k) {
    la.push_back(S::variable(eta[lay.log_a(static_cast<int>(k))], 2 * ns, k));
    lb.push_back(S::variable(eta[lay.log_b(static_cast<int>(k))], 2 * ns, ns + k));
  }
  const S zero(0.0, 2 * ns);
  StickBlock<S> out;
  out.elog_pi = kernels::expected_log_pi(std::span<const S>(la), std::span<const S>(lb), zero);
  out.kl = kernels::stick_kl(std::span<const S>(la), std::span<const S>(lb), model.priors().alpha, zero);
  return out;
}

void check_inputs(const FreeVector& eta, const WeightVector& w, const Model& model) {
  if (eta.size() != model.dim()) throw DataError("free vector has the wrong dimension");
  if (w.size() != model.n_genes()) throw DataError("weight vector length does not match gene count");
  if (!eta.allFinite()) throw NumericalError("free vector contains non-finite entries");
}

template <class S>
DerivativeBundle evaluate(const FreeVector& eta, const WeightVector& w, const Model& model, BundleRequest req,
                          Execution exec, bool chunked) {
  check_inputs(eta, w, model);
  const Layout& lay = model.layout();
  const int K = lay.K;
  const int df = lay.df;
  const Index d = lay.dim();
  const Index ns = lay.n_sticks();
  const USpace us{K, df};
  const Index ng = model.n_genes();
  const GlobalParams gp = unpack(eta, K, df);

  const StickBlock<S> sticks = stick_block<S>(eta, model);
  Context ctx;
  ctx.log_tau = gp.log_tau;
  for (int k = 0; k < K; ++k) {
    const VectorXd b = gp.beta.row(k).transpose();
    ctx.elog_pi.push_back(sticks.elog_pi[k].v);
    ctx.q.push_back(b.dot(model.XtX() * b));
    ctx.s.push_back(b.dot(model.Xt1()));
  }
  ctx.a = model.Xty() * gp.beta.transpose();

  const bool second = req.hessian || req.cross;
  MatrixXd cross_u;
  if (req.cross) cross_u = MatrixXd::Zero(us.dim(), ng);

  auto run_genes = [&](Index begin, Index end, Accumulator& acc) {
    for (Index g = begin; g < end; ++g) {
      double* col = req.cross ? cross_u.col(g).data() : nullptr;
      if (second)
        gene_kernel<Jet<5>>(model, us, ctx, g, w[g], req.hessian, acc, col);
      else
        gene_kernel<Dual<5>>(model, us, ctx, g, w[g], false, acc, col);
    }
  };

  Accumulator total(us.dim(), req.hessian);
  if (chunked) {
    std::vector<Accumulator> parts(static_cast<std::size_t>(chunk_count(ng)), Accumulator(0, false));
    for_each_chunk(ng, exec, [&](Index c, Index begin, Index end) {
      Accumulator acc(us.dim(), req.hessian);
      run_genes(begin, end, acc);
      parts[static_cast<std::size_t>(c)] = std::move(acc);
    });
    for (const Accumulator& a : parts) total.merge(a);
  } else {
    run_genes(0, ng, total);
  }

  // Jacobian of u with respect to eta.
  MatrixXd Ju = MatrixXd::Zero(us.dim(), d);
  for (int k = 0; k < K; ++k) {
    if (ns > 0) Ju.row(us.e(k)).head(2 * ns) = sticks.elog_pi[k].g.transpose();
    const VectorXd b = gp.beta.row(k).transpose();
    Ju.block(us.q(k), lay.beta(k, 0), 1, df) = 2.0 * (model.XtX() * b).transpose();
    Ju.block(us.s(k), lay.beta(k, 0), 1, df) = model.Xt1().transpose();
  }
  Ju(us.lt(), lay.log_tau()) = 1.0;
  Ju.block(us.beta(0), lay.beta_begin(), static_cast<Index>(K) * df, static_cast<Index>(K) * df).setIdentity();

  DerivativeBundle out;
  out.value = total.value + sticks.kl.v;
  out.grad = Ju.transpose() * total.du;
  if (ns > 0) out.grad.head(2 * ns) += sticks.kl.g;

  // Prior terms on beta and tau.
  const Priors& pr = model.priors();
  for (int k = 0; k < K; ++k) {
    const VectorXd b = gp.beta.row(k).transpose();
    out.value += kernels::beta_prior(std::span<const double>(b.data(), static_cast<std::size_t>(df)), pr, 0.0);
    out.grad.segment(lay.beta(k, 0), df) += (b.array() - pr.beta_mean).matrix() / pr.beta_var;
  }
  const Jet<1> tau = kernels::tau_prior(Jet<1>::variable(gp.log_tau, 1, 0), pr);
  out.value += tau.v;
  out.grad[lay.log_tau()] += tau.g[0];

  if (!std::isfinite(out.value) || !out.grad.allFinite())
    throw NumericalError("kl derivatives: non-finite value or gradient");

  if (req.hessian) {
    if constexpr (std::is_same_v<S, Jet<Eigen::Dynamic>>) {
      out.hess = Ju.transpose() * total.hu * Ju;
      for (int k = 0; k < K; ++k) {
        if (ns > 0) out.hess.topLeftCorner(2 * ns, 2 * ns) += total.du[us.e(k)] * sticks.elog_pi[k].h;
        out.hess.block(lay.beta(k, 0), lay.beta(k, 0), df, df) += (2.0 * total.du[us.q(k)]) * model.XtX();
        out.hess.block(lay.beta(k, 0), lay.beta(k, 0), df, df).diagonal().array() += 1.0 / pr.beta_var;
      }
      if (ns > 0) out.hess.topLeftCorner(2 * ns, 2 * ns) += sticks.kl.h;
      out.hess(lay.log_tau(), lay.log_tau()) += tau.h(0, 0);
      out.hess = 0.5 * (out.hess + out.hess.transpose()).eval();
      if (!out.hess.allFinite()) throw NumericalError("kl derivatives: non-finite Hessian");
    }
  }
  if (req.cross) {
    out.cross = Ju.transpose() * cross_u;
    if (!out.cross.allFinite()) throw NumericalError("kl derivatives: non-finite cross derivatives");
  }
  return out;
}

}  // namespace

DerivativeBundle kl_bundle(const FreeVector& eta, const WeightVector& w, const Model& model, BundleRequest request,
                           Execution exec) {
  if (request.hessian || request.cross)
    return evaluate<Jet<Eigen::Dynamic>>(eta, w, model, request, exec, true);
  return evaluate<Dual<Eigen::Dynamic>>(eta, w, model, request, exec, true);
}

DerivativeBundle kl_bundle_serial(const FreeVector& eta, const WeightVector& w, const Model& model,
                                  BundleRequest request) {
  if (request.hessian || request.cross)
    return evaluate<Jet<Eigen::Dynamic>>(eta, w, model, request, Execution::serial, false);
  return evaluate<Dual<Eigen::Dynamic>>(eta, w, model, request, Execution::serial, false);
}

double kl_value_grad(const FreeVector& eta, const WeightVector& w, const Model& model, VectorXd& grad,
                     Execution exec) {
  DerivativeBundle b = evaluate<Dual<Eigen::Dynamic>>(eta, w, model, {false, false}, exec, true);
  grad = std::move(b.grad);
  return b.value;
}

VectorXd kl_grad(const FreeVector& eta, const WeightVector& w, const Model& model) {
  VectorXd g;
  kl_value_grad(eta, w, model, g);
  return g;
}

MatrixXd kl_hessian(const FreeVector& eta, const WeightVector& w, const Model& model) {
  return kl_bundle(eta, w, model, {true, false}).hess;
}

MatrixXd kl_cross(const FreeVector& eta, const WeightVector& w, const Model& model) {
  return kl_bundle(eta, w, model, {false, true}).cross;
}

DerivativeBundle kl_bundle_dense(const FreeVector& eta, const WeightVector& w, const Model& model) {
  check_inputs(eta, w, model);
  using J = Jet<Eigen::Dynamic>;
  const Index d = eta.size();
  const Index ng = w.size();
  const Index n = d + ng;
  std::vector<J> eta_j;
  std::vector<J> w_j;
  eta_j.reserve(static_cast<std::size_t>(d));
  w_j.reserve(static_cast<std::size_t>(ng));
  for (Index i = 0; i < d; ++i) eta_j.push_back(J::variable(eta[i], n, i));
  for (Index g = 0; g < ng; ++g) w_j.push_back(J::variable(w[g], n, d + g));
  const J f = marginal_kl_generic<J>(eta_j, w_j, model);
  DerivativeBundle out;
  out.value = f.v;
  out.grad = f.g.head(d);
  out.hess = f.h.topLeftCorner(d, d);
  out.cross = f.h.block(0, d, d, ng);
  return out;
}

VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double step) {
  VectorXd g(x.size());
  VectorXd xp = x;
  for (Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + step;
    const double fp = f(xp);
    xp[i] = x[i] - step;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& x, double step) {
  VectorXd xp = x;
  MatrixXd jac;
  for (Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + step;
    const VectorXd fp = f(xp);
    xp[i] = x[i] - step;
    const VectorXd fm = f(xp);
    xp[i] = x[i];
    if (i == 0) jac.resize(fp.size(), x.size());
    jac.col(i) = (fp - fm) / (2.0 * step);
  }
  return jac;
}

double MixtureObjective::value(const VectorXd& eta, const VectorXd& w) const {
  return marginal_kl(eta, w, model_, exec_);
}

double MixtureObjective::value_grad(const VectorXd& eta, const VectorXd& w, VectorXd& grad) const {
  return kl_value_grad(eta, w, model_, grad, exec_);
}

DerivativeBundle MixtureObjective::bundle(const VectorXd& eta, const VectorXd& w, bool with_cross) const {
  return kl_bundle(eta, w, model_, {true, with_cross}, exec_);
}

}  // namespace linboot
