#include <doctest.h>

#include "linboot/bootstrap.hpp"
#include "linboot/derivatives.hpp"
#include "reference.hpp"

using namespace linboot;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Setup {
  Model model;
  FitResult fit;
  SensitivityMatrix sens;
  BaseFit base;
};

Setup make_setup(int n_genes, int K_true, int K, double separation, std::uint64_t seed) {
  SimulationSpec spec;
  spec.n_genes = n_genes;
  spec.K_true = K_true;
  spec.separation = separation;
  spec.seed = seed;
  Model m(simulate(spec, regular_grid(7, 2), Priors{}).data, Priors{}, K);
  FitResult f = multi_restart(m, unit_weights(n_genes), 6, seed);
  SensitivityMatrix s = compute_S(MixtureObjective(m), f.eta_star);
  BaseFit b = make_base(f.eta_star, m);
  return {std::move(m), std::move(f), std::move(s), std::move(b)};
}

}  // namespace

TEST_CASE("weights: multinomial totals and the single-gene case") {
  for (int n : {1, 2, 5, 50, 333}) {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const VectorXd w = sample_weights(n, s);
      CHECK(w.sum() == n);
      CHECK(w.minCoeff() >= 0.0);
      CHECK((w.array() == w.array().round()).all());
    }
  }
  CHECK(sample_weights(1, 42)[0] == 1.0);
}

TEST_CASE("weights: Monte Carlo moments of Multinomial(n, 1/n)") {
  const int n = 20, draws = 10000;
  VectorXd sum = VectorXd::Zero(n), sum2 = VectorXd::Zero(n);
  for (int d = 0; d < draws; ++d) {
    const VectorXd w = sample_weights(n, derive_seed(123, d));
    sum += w;
    sum2 += w.cwiseProduct(w);
  }
  const VectorXd mean = sum / draws;
  const VectorXd var = sum2 / draws - mean.cwiseProduct(mean);
  const double expected_var = (n - 1.0) / n;
  for (int g = 0; g < n; ++g) {
    CHECK(std::abs(mean[g] - 1.0) < 0.05);
    CHECK(std::abs(var[g] - expected_var) < 0.1 * expected_var);
  }
}

TEST_CASE("unit weights reproduce the base clustering in every mode") {
  const Setup s = make_setup(40, 3, 3, 10.0, 1);
  BootstrapConfig cfg;
  cfg.cold_restarts = 4;
  const VectorXd ones = unit_weights(40);
  for (Mode mode : {Mode::linear, Mode::warm, Mode::cold}) {
    const ReplicateResult r = run_replicate(mode, 0, 0, ones, s.base, &s.sens, s.model, cfg);
    CHECK(r.converged);
    CHECK(std::abs(r.fm - 1.0) < 1e-10);
    CHECK(std::abs(r.nmi - 1.0) < 1e-10);
    CHECK(r.wall_time_seconds > 0.0);
  }
}

TEST_CASE("warm optimum is no worse than the linear prediction, and refits improve on their starts") {
  const Setup s = make_setup(50, 3, 5, 5.0, 2);
  BootstrapConfig cfg;
  cfg.n_boot = 8;
  cfg.cold_restarts = 3;
  cfg.linear_kl = true;
  const BootstrapRun run = run_bootstrap(cfg, s.base, &s.sens, s.model);
  REQUIRE(run.replicates.size() == 24);
  for (int b = 0; b < 8; ++b) {
    const ReplicateResult& lin = run.replicates[3 * b];
    const ReplicateResult& warm = run.replicates[3 * b + 1];
    const ReplicateResult& cold = run.replicates[3 * b + 2];
    CHECK(lin.mode == Mode::linear);
    CHECK(warm.mode == Mode::warm);
    CHECK(cold.mode == Mode::cold);
    CHECK(lin.weights_seed == warm.weights_seed);
    CHECK(cold.weights_seed == warm.weights_seed);
    REQUIRE(warm.converged);
    CHECK(warm.kl_value <= lin.kl_value);
    CHECK(warm.kl_value <= warm.init_kl);
    CHECK(cold.kl_value <= cold.init_kl);
    for (const ReplicateResult* r : {&lin, &warm, &cold}) {
      CHECK(r->fm >= 0.0);
      CHECK(r->fm <= 1.0 + 1e-12);
      CHECK(r->nmi >= 0.0);
      CHECK(r->nmi <= 1.0 + 1e-12);
    }
  }
  CHECK(run.summary.at(Mode::linear).n_ok == 8);
  CHECK(run.summary.at(Mode::linear).median_seconds < run.summary.at(Mode::warm).median_seconds);
}

TEST_CASE("same master seed gives identical results; serial equals parallel") {
  const Setup s = make_setup(40, 3, 4, 5.0, 3);
  BootstrapConfig cfg;
  cfg.n_boot = 6;
  cfg.cold_restarts = 2;
  cfg.pairs = all_pairs({0, 1, 2, 3, 4, 5});
  cfg.exec = Execution::serial;
  const BootstrapRun a = run_bootstrap(cfg, s.base, &s.sens, s.model);
  const BootstrapRun b = run_bootstrap(cfg, s.base, &s.sens, s.model);
  cfg.exec = Execution::parallel;
  const BootstrapRun c = run_bootstrap(cfg, s.base, &s.sens, s.model);
  for (std::size_t i = 0; i < a.replicates.size(); ++i) {
    for (const BootstrapRun* o : {&b, &c}) {
      const ReplicateResult& x = a.replicates[i];
      const ReplicateResult& y = o->replicates[i];
      CHECK(x.fm == y.fm);
      CHECK(x.nmi == y.nmi);
      CHECK((x.kl_value == y.kl_value || (std::isnan(x.kl_value) && std::isnan(y.kl_value))));
      CHECK(x.weights_seed == y.weights_seed);
      CHECK(x.cocluster == y.cocluster);
    }
  }
}

TEST_CASE("linear mode without a sensitivity matrix is refused") {
  const Setup s = make_setup(20, 2, 2, 5.0, 4);
  BootstrapConfig cfg;
  cfg.n_boot = 2;
  cfg.modes = {Mode::linear};
  CHECK_THROWS(run_bootstrap(cfg, s.base, nullptr, s.model));
}

TEST_CASE("non-convergent replicates are flagged and excluded from summaries") {
  const Setup s = make_setup(30, 3, 3, 5.0, 5);
  BootstrapConfig cfg;
  cfg.n_boot = 4;
  cfg.modes = {Mode::warm};
  cfg.schedule.bfgs_iters = 1;
  cfg.schedule.newton_max_iters = 0;
  const BootstrapRun run = run_bootstrap(cfg, s.base, &s.sens, s.model);
  CHECK(run.failures.size() == 4);
  CHECK(run.summary.at(Mode::warm).n_failed == 4);
  CHECK(run.summary.at(Mode::warm).n_ok == 0);
}

TEST_CASE("mode names round trip") {
  for (Mode m : {Mode::linear, Mode::warm, Mode::cold}) CHECK(parse_mode(to_string(m)) == m);
  CHECK_THROWS(parse_mode("lukewarm"));
}
