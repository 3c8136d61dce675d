#include "linboot/bootstrap.hpp"

#include <chrono>
#include <cmath>
#include <exception>

#include <boost/random/binomial_distribution.hpp>
#include <boost/random/mersenne_twister.hpp>

#include "linboot/errors.hpp"

namespace linboot {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::linear: return "linear";
    case Mode::warm: return "warm";
    case Mode::cold: return "cold";
  }
  return "unknown";
}

Mode parse_mode(const std::string& s) {
  if (s == "linear") return Mode::linear;
  if (s == "warm") return Mode::warm;
  if (s == "cold") return Mode::cold;
  throw UsageError("unknown bootstrap mode '" + s + "' (expected linear, warm or cold)");
}

WeightVector sample_weights(Eigen::Index n_genes, std::uint64_t seed) {
  if (n_genes < 1) throw UsageError("sample_weights: need at least one gene");
  boost::random::mt19937_64 rng(seed);
  WeightVector w = WeightVector::Zero(n_genes);
  // Sequential conditional binomials.
  long remaining = static_cast<long>(n_genes);
  for (Eigen::Index g = 0; g + 1 < n_genes && remaining > 0; ++g) {
    const double p = 1.0 / static_cast<double>(n_genes - g);
    boost::random::binomial_distribution<long> draw(remaining, p);
    const long c = draw(rng);
    w[g] = static_cast<double>(c);
    remaining -= c;
  }
  w[n_genes - 1] += static_cast<double>(remaining);
  return w;
}

BaseFit make_base(const FreeVector& eta_star, const Model& model) {
  return {eta_star, cluster_probs(eta_star, model, unit_weights(model.n_genes()))};
}

std::uint64_t replicate_seed(std::uint64_t master_seed, int index) {
  return derive_seed(master_seed, static_cast<std::uint64_t>(index), 0x626f6f74ULL);
}

ReplicateResult run_replicate(Mode mode, int index, std::uint64_t weights_seed, const WeightVector& w,
                              const BaseFit& base, const SensitivityMatrix* sens, const Model& model,
                              const BootstrapConfig& config) {
  ReplicateResult r;
  r.replicate_index = index;
  r.mode = mode;
  r.weights_seed = weights_seed;

  using clock = std::chrono::steady_clock;
  Eigen::MatrixXd zeta;
  try {
    const auto t0 = clock::now();
    switch (mode) {
      case Mode::linear: {
        if (sens == nullptr) throw UsageError("linear bootstrap needs a sensitivity matrix");
        const FreeVector eta = eta_lin(*sens, w);
        zeta = predict_clustering(eta, model, w);
        r.wall_time_seconds = std::chrono::duration<double>(clock::now() - t0).count();
        if (config.linear_kl) r.kl_value = marginal_kl(eta, w, model, Execution::serial);
        break;
      }
      case Mode::warm: {
        const FitResult fit = optimize(base.eta_star, w, model, config.schedule);
        zeta = cluster_probs(fit.eta_star, model, w);
        r.wall_time_seconds = std::chrono::duration<double>(clock::now() - t0).count();
        r.kl_value = fit.kl_value;
        if (!fit.accepted_values.empty()) r.init_kl = fit.accepted_values.front();
        r.converged = fit.converged;
        r.diagnostics = fit.diagnostics;
        break;
      }
      case Mode::cold: {
        const FitResult fit = multi_restart(model, w, config.cold_restarts,
                                            derive_seed(weights_seed, 0x636f6c64ULL), config.schedule,
                                            Execution::serial);
        zeta = cluster_probs(fit.eta_star, model, w);
        r.wall_time_seconds = std::chrono::duration<double>(clock::now() - t0).count();
        r.kl_value = fit.kl_value;
        if (!fit.accepted_values.empty()) r.init_kl = fit.accepted_values.front();
        r.converged = fit.converged;
        r.diagnostics = fit.diagnostics;
        break;
      }
    }
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    r.converged = false;
    r.diagnostics = e.what();
    return r;
  }

  r.fm = fm_index(base.zeta, zeta);
  try {
    r.nmi = nmi(base.zeta, zeta);
  } catch (const DataError& e) {
    r.diagnostics = e.what();
  }
  if (!config.pairs.empty()) r.cocluster = cocluster_probs(zeta, config.pairs);
  if (config.keep_zeta) r.zeta = std::move(zeta);
  return r;
}

BootstrapRun run_bootstrap(const BootstrapConfig& config, const BaseFit& base, const SensitivityMatrix* sens,
                           const Model& model) {
  if (config.n_boot < 1) throw UsageError("n_boot must be at least 1");
  if (config.modes.empty()) throw UsageError("no bootstrap modes requested");
  for (Mode m : config.modes)
    if (m == Mode::linear && sens == nullptr)
      throw UsageError("linear bootstrap needs a sensitivity matrix (run the sensitivity command first)");

  const int n_modes = static_cast<int>(config.modes.size());
  const int n_tasks = config.n_boot * n_modes;
  BootstrapRun out;
  out.replicates.resize(static_cast<std::size_t>(n_tasks));

  std::vector<WeightVector> weights(static_cast<std::size_t>(config.n_boot));
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(config.n_boot));
  for (int b = 0; b < config.n_boot; ++b) {
    seeds[b] = replicate_seed(config.master_seed, b);
    weights[b] = sample_weights(model.n_genes(), seeds[b]);
  }

  auto run_task = [&](int t) {
    const int b = t / n_modes;
    out.replicates[t] = run_replicate(config.modes[t % n_modes], b, seeds[b], weights[b], base, sens, model, config);
  };
  if (config.exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < n_tasks; ++t) run_task(t);
  } else {
    for (int t = 0; t < n_tasks; ++t) run_task(t);
  }

  for (const ReplicateResult& r : out.replicates)
    if (!r.converged)
      out.failures.push_back("replicate " + std::to_string(r.replicate_index) + " (" + to_string(r.mode) +
                             "): " + r.diagnostics);
  out.summary = summarize(out.replicates);
  return out;
}

std::map<Mode, ModeSummary> summarize(const std::vector<ReplicateResult>& replicates) {
  std::map<Mode, std::vector<const ReplicateResult*>> by_mode;
  std::map<Mode, ModeSummary> out;
  for (const ReplicateResult& r : replicates) {
    if (r.converged)
      by_mode[r.mode].push_back(&r);
    else
      ++out[r.mode].n_failed;
  }
  for (auto& [mode, rs] : by_mode) {
    ModeSummary& s = out[mode];
    s.n_ok = static_cast<int>(rs.size());
    std::vector<double> secs, fm, nm;
    for (const ReplicateResult* r : rs) {
      secs.push_back(r->wall_time_seconds);
      fm.push_back(r->fm);
      if (!std::isnan(r->nmi)) nm.push_back(r->nmi);
    }
    s.median_seconds = median(secs);
    s.fm_median = median(fm);
    s.fm_q05 = quantile(fm, 0.05);
    s.fm_q95 = quantile(fm, 0.95);
    s.nmi_median = median(nm);
    s.nmi_q05 = quantile(nm, 0.05);
    s.nmi_q95 = quantile(nm, 0.95);
  }
  return out;
}

}  // namespace linboot
