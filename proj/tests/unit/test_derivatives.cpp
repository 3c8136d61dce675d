#include <doctest.h>

#include <random>

#include "linboot/derivatives.hpp"
#include "linboot/optimizer.hpp"
#include "reference.hpp"

using namespace linboot;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double rel_err(const MatrixXd& a, const MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

VectorXd random_weights(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.3, 2.0);
  VectorXd w(n);
  for (auto& v : w) v = u(rng);
  return w;
}

}  // namespace

TEST_CASE("gradient matches central differences at 10 seeded points") {
  for (Weighting wt : {Weighting::likelihood, Weighting::per_gene}) {
    const Model m(ref::small_dataset(12, 7, 2, 3, 5, 3.0, 1), Priors{}, 4, wt);
    for (std::uint64_t s = 0; s < 10; ++s) {
      const VectorXd eta = ref::random_eta(m, s);
      const VectorXd w = random_weights(12, s);
      const VectorXd g = kl_grad(eta, w, m);
      const VectorXd fd = fd_gradient([&](const VectorXd& x) { return marginal_kl(x, w, m); }, eta, 1e-5);
      CHECK(rel_err(g, fd) < 1e-6);
    }
  }
}

TEST_CASE("Hessian is symmetric and matches differences of the gradient") {
  for (Weighting wt : {Weighting::likelihood, Weighting::per_gene}) {
    const Model m(ref::small_dataset(12, 7, 2, 3, 5, 3.0, 2), Priors{}, 4, wt);
    for (std::uint64_t s = 0; s < 10; ++s) {
      const VectorXd eta = ref::random_eta(m, 50 + s);
      const VectorXd w = random_weights(12, s + 3);
      const MatrixXd H = kl_hessian(eta, w, m);
      CHECK((H - H.transpose()).cwiseAbs().maxCoeff() < 1e-10 * H.cwiseAbs().maxCoeff());
      const MatrixXd fd = fd_jacobian([&](const VectorXd& x) { return kl_grad(x, w, m); }, eta, 1e-4);
      CHECK(rel_err(H, fd) < 1e-4);
    }
  }
}

TEST_CASE("cross derivatives match differences of the gradient in the weights") {
  for (Weighting wt : {Weighting::likelihood, Weighting::per_gene}) {
    const Model m(ref::small_dataset(10, 7, 2, 3, 5, 3.0, 3), Priors{}, 3, wt);
    for (std::uint64_t s = 0; s < 10; ++s) {
      const VectorXd eta = ref::random_eta(m, 80 + s);
      const VectorXd w = random_weights(10, s + 7);
      const MatrixXd C = kl_cross(eta, w, m);
      const MatrixXd fd = fd_jacobian([&](const VectorXd& v) { return kl_grad(eta, v, m); }, w, 1e-4);
      CHECK(rel_err(C, fd) < 1e-4);
    }
  }
}

TEST_CASE("structured derivatives agree with the dense generic-scalar route") {
  for (Weighting wt : {Weighting::likelihood, Weighting::per_gene}) {
    const Model m(ref::small_dataset(9, 7, 2, 3, 5, 3.0, 4), Priors{}, 3, wt);
    const VectorXd eta = ref::random_eta(m, 5);
    const VectorXd w = random_weights(9, 5);
    const DerivativeBundle a = kl_bundle(eta, w, m);
    const DerivativeBundle b = kl_bundle_dense(eta, w, m);
    CHECK(std::abs(a.value - b.value) < 1e-10 * std::abs(b.value));
    CHECK(rel_err(a.grad, b.grad) < 1e-11);
    CHECK(rel_err(a.hess, b.hess) < 1e-10);
    CHECK(rel_err(a.cross, b.cross) < 1e-10);
  }
}

TEST_CASE("single-pass and chunked kernels agree") {
  const Model m(ref::small_dataset(150, 7, 2, 3, 5, 3.0, 5), Priors{}, 4);
  const VectorXd eta = ref::random_eta(m, 6);
  const VectorXd w = random_weights(150, 6);
  const DerivativeBundle a = kl_bundle(eta, w, m);
  const DerivativeBundle b = kl_bundle_serial(eta, w, m);
  CHECK(std::abs(a.value - b.value) < 1e-12 * std::abs(b.value));
  CHECK(rel_err(a.grad, b.grad) < 1e-12);
  CHECK(rel_err(a.hess, b.hess) < 1e-12);
  CHECK(rel_err(a.cross, b.cross) < 1e-12);
  VectorXd g;
  CHECK(kl_value_grad(eta, w, m, g) == doctest::Approx(a.value).epsilon(1e-13));
  CHECK(rel_err(g, a.grad) < 1e-12);
}

TEST_CASE("envelope property: gradient equals the partial gradient with locals frozen") {
  const Model m(ref::small_dataset(8, 7, 2, 3, 5, 3.0, 6), Priors{}, 3);
  const VectorXd eta = ref::random_eta(m, 7);
  const VectorXd w = random_weights(8, 7);
  const auto frozen = ref::locals_from(local_update(unpack(eta, 3, m.df()), m, w));
  // Differentiate the straight-line KL in the globals only, locals held fixed.
  auto F = [&](const VectorXd& x) {
    return ref::full_kl(unpack(x, 3, m.df()), frozen, m.data().y, m.data().basis.X, m.priors(), w, false, 0.0);
  };
  VectorXd partial(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // Richardson-extrapolated central difference for a tight oracle.
    auto cd = [&](double h) {
      VectorXd p = eta, q = eta;
      p[i] += h;
      q[i] -= h;
      return (F(p) - F(q)) / (2 * h);
    };
    partial[i] = (4.0 * cd(1e-4) - cd(2e-4)) / 3.0;
  }
  CHECK(rel_err(kl_grad(eta, w, m), partial) < 1e-8);
}

TEST_CASE("K = 1 has an empty stick block") {
  const Model m(ref::small_dataset(6, 7, 2, 1, 5, 3.0, 7), Priors{}, 1);
  CHECK(m.layout().n_sticks() == 0);
  CHECK(m.dim() == m.df() + 1);
  const VectorXd eta = ref::random_eta(m, 1);
  const VectorXd g = kl_grad(eta, unit_weights(6), m);
  const VectorXd fd = fd_gradient([&](const VectorXd& x) { return marginal_kl(x, unit_weights(6), m); }, eta, 1e-5);
  CHECK(g.size() == m.dim());
  CHECK(rel_err(g, fd) < 1e-6);
}

TEST_CASE("duplicated genes have identical cross columns") {
  Dataset d = ref::small_dataset(6, 7, 2, 2, 5, 3.0, 8);
  d.y.row(4) = d.y.row(1);
  const Model m(d, Priors{}, 3);
  const MatrixXd C = kl_cross(ref::random_eta(m, 2), unit_weights(6), m);
  CHECK((C.col(4) - C.col(1)).cwiseAbs().maxCoeff() <= 1e-12 * C.cwiseAbs().maxCoeff());
}

TEST_CASE("cross derivatives change with w only through the local optimum") {
  // With likelihood weighting the objective is a minimum over locals of a
  // function linear in w, so d/dw at w and at 2w differ only because the
  // locals move; with the locals at their w-optimum the difference is nonzero
  // but the gradient in w stays equal to minus the expected log-likelihood.
  const Model m(ref::small_dataset(6, 7, 2, 2, 5, 3.0, 9), Priors{}, 2);
  const VectorXd eta = ref::random_eta(m, 3);
  const VectorXd w = random_weights(6, 2);
  const MatrixXd C1 = kl_cross(eta, w, m);
  const MatrixXd C2 = kl_cross(eta, 2.0 * w, m);
  CHECK((C1 - C2).norm() > 0.0);
  auto dkl_dw = [&](const VectorXd& ww) {
    return fd_gradient([&](const VectorXd& v) { return marginal_kl(eta, v, m); }, ww, 1e-5);
  };
  // Concavity in w: the w-gradient is non-increasing along w -> 2w.
  CHECK((dkl_dw(2.0 * w) - dkl_dw(w)).dot(w) <= 1e-8);
}

TEST_CASE("Hessian is positive definite at the optimum of a well-separated instance") {
  SimulationSpec spec;
  spec.n_genes = 60;
  spec.K_true = 3;
  spec.separation = 10.0;
  spec.seed = 2;
  const Simulated sim = simulate(spec, regular_grid(7, 2), Priors{});
  const Model m(sim.data, Priors{}, 3);
  const FitResult fit = multi_restart(m, unit_weights(60), 4, 3);
  REQUIRE(fit.converged);
  CHECK(kl_grad(fit.eta_star, unit_weights(60), m).cwiseAbs().maxCoeff() < 1e-8);
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(kl_hessian(fit.eta_star, unit_weights(60), m));
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
}
