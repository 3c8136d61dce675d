#include <doctest.h>

#include <random>

#include "linboot/derivatives.hpp"
#include "linboot/errors.hpp"
#include "linboot/optimizer.hpp"
#include "linboot/spline_basis.hpp"
#include "reference.hpp"

using namespace linboot;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

class Quadratic final : public Objective {
 public:
  Quadratic(MatrixXd A, VectorXd b) : A_(std::move(A)), b_(std::move(b)) {}
  Eigen::Index dim() const override { return b_.size(); }
  double value(const VectorXd& x) const override { return 0.5 * x.dot(A_ * x) - b_.dot(x); }
  double value_grad(const VectorXd& x, VectorXd& g) const override {
    g = A_ * x - b_;
    return value(x);
  }
  double value_grad_hess(const VectorXd& x, VectorXd& g, MatrixXd& h) const override {
    h = A_;
    return value_grad(x, g);
  }

 private:
  MatrixXd A_;
  VectorXd b_;
};

// Non-convex test function with an indefinite Hessian away from the minimum.
class Rosenbrock final : public Objective {
 public:
  Eigen::Index dim() const override { return 2; }
  double value(const VectorXd& x) const override {
    return 100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2);
  }
  double value_grad(const VectorXd& x, VectorXd& g) const override {
    g.resize(2);
    g[0] = -400 * x[0] * (x[1] - x[0] * x[0]) - 2 * (1 - x[0]);
    g[1] = 200 * (x[1] - x[0] * x[0]);
    return value(x);
  }
  double value_grad_hess(const VectorXd& x, VectorXd& g, MatrixXd& h) const override {
    h.resize(2, 2);
    h << 1200 * x[0] * x[0] - 400 * x[1] + 2, -400 * x[0], -400 * x[0], 200;
    return value_grad(x, g);
  }
};

bool monotone(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[i - 1] + 1e-12 * std::max(1.0, std::abs(v[i - 1]))) return false;
  return true;
}

Model seeded_model(int n_genes = 30, int K = 4, std::uint64_t seed = 1) {
  return Model(ref::small_dataset(n_genes, 7, 2, 3, 7, 4.0, seed), Priors{}, K);
}

}  // namespace

TEST_CASE("Newton stage solves a quadratic in at most two steps") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 1.0);
  MatrixXd R(6, 6);
  for (auto& v : R.reshaped()) v = nd(rng);
  const MatrixXd A = R * R.transpose() + MatrixXd::Identity(6, 6);
  VectorXd b(6);
  for (auto& v : b) v = nd(rng);
  Schedule sch;
  sch.bfgs_iters = 0;
  const FitResult fit = optimize(Quadratic(A, b), VectorXd::Zero(6), sch);
  CHECK(fit.converged);
  CHECK(fit.newton_iterations <= 2);
  CHECK((fit.eta_star - A.ldlt().solve(b)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("accepted objective values never increase (Rosenbrock, indefinite regions)") {
  for (const VectorXd& x0 : {VectorXd(Eigen::Vector2d(-1.2, 1.0)), VectorXd(Eigen::Vector2d(2.0, -1.0))}) {
    for (int bfgs : {0, 5, 300}) {
      Schedule sch;
      sch.bfgs_iters = bfgs;
      const FitResult fit = optimize(Rosenbrock(), x0, sch);
      CHECK(fit.converged);
      CHECK(monotone(fit.accepted_values));
      CHECK(std::abs(fit.eta_star[0] - 1.0) < 1e-7);
    }
  }
}

TEST_CASE("seeded instance converges from a k-means start") {
  const Model m = seeded_model();
  const GlobalParams init = kmeans_init(m, 5);
  const FitResult fit = optimize(pack(init), unit_weights(m.n_genes()), m);
  CHECK(fit.converged);
  CHECK(fit.grad_norm <= 1e-8);
  CHECK(monotone(fit.accepted_values));
  CHECK(fit.bfgs_iterations <= 300);
  CHECK(fit.newton_iterations <= 500);
}

TEST_CASE("warm start at a converged optimum stays put") {
  const Model m = seeded_model();
  const VectorXd w = unit_weights(m.n_genes());
  const FitResult fit = optimize(pack(kmeans_init(m, 5)), w, m);
  REQUIRE(fit.converged);
  const FitResult again = optimize(fit.eta_star, w, m);
  CHECK(again.converged);
  CHECK(again.newton_iterations <= 1);
  CHECK(std::abs(again.kl_value - fit.kl_value) <= 1e-12 * std::abs(fit.kl_value));
}

TEST_CASE("non-finite start returns a diagnosed failure") {
  const Model m = seeded_model(10, 2);
  VectorXd eta = pack(kmeans_init(m, 1));
  eta[m.layout().log_tau()] = 1000.0;
  const FitResult fit = optimize(eta, unit_weights(10), m);
  CHECK_FALSE(fit.converged);
  CHECK(!fit.diagnostics.empty());
}

TEST_CASE("kmeans_init: identical genes give identical centroids") {
  Dataset d = ref::small_dataset(12, 7, 2, 1, 5, 3.0, 2);
  for (Eigen::Index g = 1; g < 12; ++g) d.y.row(g) = d.y.row(0);
  const Model m(d, Priors{}, 3);
  const GlobalParams g = kmeans_init(m, 9);
  const double scale = g.beta.cwiseAbs().maxCoeff();
  CHECK((g.beta.row(1) - g.beta.row(0)).cwiseAbs().maxCoeff() <= 1e-13 * scale);
  CHECK((g.beta.row(2) - g.beta.row(0)).cwiseAbs().maxCoeff() <= 1e-13 * scale);
}

TEST_CASE("kmeans_init: sticks at (1, alpha), seed-deterministic, K > n_g rejected") {
  const Model m = seeded_model(20, 4);
  const GlobalParams a = kmeans_init(m, 3);
  const GlobalParams b = kmeans_init(m, 3);
  CHECK(pack(a) == pack(b));
  for (int k = 0; k < 3; ++k) {
    CHECK(a.stick_a(k) == doctest::Approx(1.0));
    CHECK(a.stick_b(k) == doctest::Approx(m.priors().alpha));
  }
  const Model big(ref::small_dataset(3, 7, 2, 1, 5, 3.0, 1), Priors{}, 4);
  CHECK_THROWS_AS(kmeans_init(big, 1), DataError);
}

TEST_CASE("kmeans_init recovers well-separated cluster coefficients") {
  SimulationSpec spec;
  spec.n_genes = 150;
  spec.K_true = 3;
  spec.separation = 10.0;
  spec.seed = 12;
  const Simulated sim = simulate(spec, regular_grid(7, 2), Priors{});
  const Model m(sim.data, Priors{}, 3);
  const GlobalParams init = kmeans_init(m, 4);
  // Per-gene fits carry each gene's offset along the constant direction, so
  // compare the curve shapes with that direction projected out.
  auto shape = [](Eigen::RowVectorXd r) { return Eigen::RowVectorXd(r.array() - r.mean()); };
  std::vector<int> perm{0, 1, 2};
  double best = std::numeric_limits<double>::infinity();
  do {
    double worst = 0.0;
    for (int k = 0; k < 3; ++k) {
      const Eigen::RowVectorXd t = shape(sim.truth.true_beta.row(k));
      worst = std::max(worst, (shape(init.beta.row(perm[k])) - t).norm() / t.norm());
    }
    best = std::min(best, worst);
  } while (std::next_permutation(perm.begin(), perm.end()));
  CHECK(best < 0.1);
}

TEST_CASE("multi_restart: one restart equals a single optimize, best beats all") {
  const Model m = seeded_model(25, 3, 4);
  const VectorXd w = unit_weights(25);
  const FitResult one = multi_restart(m, w, 1, 77);
  const FitResult direct = optimize(pack(kmeans_init(m, derive_seed(77, 0))), w, m);
  CHECK(one.eta_star == direct.eta_star);
  CHECK(one.kl_value == direct.kl_value);

  std::vector<FitResult> runs;
  const FitResult best = multi_restart(m, w, 6, 77, {}, Execution::parallel, &runs);
  REQUIRE(runs.size() == 6);
  for (const FitResult& r : runs)
    if (r.converged) CHECK(best.kl_value <= r.kl_value);
}

TEST_CASE("multi_restart is deterministic and serial equals parallel") {
  const Model m = seeded_model(25, 3, 5);
  const VectorXd w = unit_weights(25);
  const FitResult a = multi_restart(m, w, 5, 3, {}, Execution::serial);
  const FitResult b = multi_restart(m, w, 5, 3, {}, Execution::parallel);
  const FitResult c = multi_restart(m, w, 5, 3, {}, Execution::serial);
  CHECK(a.eta_star == b.eta_star);
  CHECK(a.eta_star == c.eta_star);
  CHECK(a.init_seed == b.init_seed);
}

TEST_CASE("multi_restart: label-permuted optima have equal KL") {
  // Two equally sized, far-apart clusters: both labelings are optima with the
  // same objective value.
  Dataset d = ref::small_dataset(20, 7, 2, 1, 5, 0.0, 3);
  const Eigen::VectorXd shape = d.basis.X * Eigen::VectorXd::LinSpaced(5, -10.0, 10.0);
  for (Eigen::Index g = 0; g < 20; ++g) {
    const Eigen::VectorXd base = g < 10 ? shape : Eigen::VectorXd(-shape);
    d.y.row(g) = base.transpose() + 0.5 * d.y.row(g % 10);
  }
  for (Eigen::Index g = 10; g < 20; ++g) d.y.row(g) = -d.y.row(g - 10);
  const Model m(d, Priors{}, 2);
  const VectorXd w = unit_weights(20);
  std::vector<FitResult> runs;
  const FitResult best = multi_restart(m, w, 12, 5, {}, Execution::serial, &runs);
  std::vector<const FitResult*> distinct;
  for (const FitResult& r : runs) {
    if (!r.converged) continue;
    bool seen = false;
    for (const FitResult* o : distinct) seen |= (o->eta_star - r.eta_star).cwiseAbs().maxCoeff() < 1e-4;
    if (!seen) distinct.push_back(&r);
  }
  CHECK(distinct.size() >= 2);
  for (const FitResult* o : distinct) CHECK(std::abs(o->kl_value - best.kl_value) < 1e-6);
  const FitResult again = multi_restart(m, w, 12, 5, {}, Execution::serial);
  CHECK(again.eta_star == best.eta_star);
}

TEST_CASE("multi_restart with no convergent run throws with diagnostics") {
  const Model m = seeded_model(15, 3);
  Schedule sch;
  sch.bfgs_iters = 1;
  sch.newton_max_iters = 0;
  CHECK_THROWS_WITH_AS(multi_restart(m, unit_weights(15), 3, 1, sch), doctest::Contains("restart 2"),
                       NumericalError);
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
}
