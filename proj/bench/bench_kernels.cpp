// Timing of the objective kernels (serial reference vs chunked parallel) and of
// one linear vs one warm bootstrap replicate.
#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "linboot/bootstrap.hpp"
#include "linboot/data_io.hpp"
#include "linboot/derivatives.hpp"
#include "linboot/parallel.hpp"
#include "linboot/sensitivity.hpp"

using namespace linboot;
using Clock = std::chrono::steady_clock;

template <class Fn>
double best_of(int reps, Fn&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return best;
}

int main(int argc, char** argv) {
  const int n_genes = argc > 1 ? std::atoi(argv[1]) : 1000;
  const int K = argc > 2 ? std::atoi(argv[2]) : 30;
  SimulationSpec spec;
  spec.n_genes = n_genes;
  spec.K_true = 5;
  const Model model(simulate(spec, regular_grid(7, 2), Priors{}).data, Priors{}, K);
  const WeightVector w = unit_weights(n_genes);
  const FreeVector eta = pack(kmeans_init(model, 1));
  std::printf("n_genes=%d K=%d dim=%ld workers=%d\n", n_genes, K, static_cast<long>(model.dim()), worker_count());

  volatile double sink = 0.0;
  const double kl_ref = best_of(5, [&] { sink = marginal_kl_serial(eta, w, model); });
  const double kl_par = best_of(5, [&] { sink = marginal_kl(eta, w, model, Execution::parallel); });
  std::printf("marginal_kl      serial %.3e s  parallel %.3e s  speedup %.2f\n", kl_ref, kl_par, kl_ref / kl_par);

  const double b_ref = best_of(3, [&] { sink = kl_bundle_serial(eta, w, model).value; });
  const double b_par = best_of(3, [&] { sink = kl_bundle(eta, w, model).value; });
  std::printf("kl_bundle        serial %.3e s  parallel %.3e s  speedup %.2f\n", b_ref, b_par, b_ref / b_par);

  const FitResult fit = optimize(eta, w, model);
  const SensitivityMatrix sens = compute_S(MixtureObjective(model), fit.eta_star);
  const BaseFit base = make_base(fit.eta_star, model);
  BootstrapConfig cfg;
  const WeightVector wb = sample_weights(n_genes, 7);
  const ReplicateResult lin = run_replicate(Mode::linear, 0, 7, wb, base, &sens, model, cfg);
  const ReplicateResult warm = run_replicate(Mode::warm, 0, 7, wb, base, &sens, model, cfg);
  std::printf("base fit %.3e s  S %.3e s  linear replicate %.3e s  warm replicate %.3e s\n", fit.wall_time,
              sens.wall_time, lin.wall_time_seconds, warm.wall_time_seconds);
  return 0;
}
