#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "linboot/metrics.hpp"
#include "linboot/model.hpp"
#include "linboot/optimizer.hpp"
#include "linboot/sensitivity.hpp"

namespace linboot {

enum class Mode { linear, warm, cold };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

/// Multinomial counts: n_g trials over n_g equiprobable genes.
WeightVector sample_weights(Eigen::Index n_genes, std::uint64_t seed);

struct BootstrapConfig {
  int n_boot = 200;
  std::vector<Mode> modes{Mode::linear, Mode::warm, Mode::cold};
  std::uint64_t master_seed = 1;
  int cold_restarts = 10;
  Schedule schedule;
  bool linear_kl = false;        // also evaluate the objective at eta_lin
  std::vector<GenePair> pairs;   // co-clustering pairs to record per replicate
  bool keep_zeta = false;        // keep the full cluster-probability matrix per replicate
  Execution exec = Execution::parallel;
};

struct ReplicateResult {
  int replicate_index = 0;
  Mode mode = Mode::linear;
  std::uint64_t weights_seed = 0;
  double kl_value = std::numeric_limits<double>::quiet_NaN();    // NaN when not evaluated
  double init_kl = std::numeric_limits<double>::quiet_NaN();     // objective at the starting point (warm, cold)
  double fm = std::numeric_limits<double>::quiet_NaN();
  double nmi = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> cocluster;  // zeta_g1' zeta_g2 for the configured pairs
  Eigen::MatrixXd zeta;           // only with keep_zeta
  double wall_time_seconds = 0.0;
  bool converged = true;
  std::string diagnostics;
};

/// The base fit every replicate is compared with.
struct BaseFit {
  FreeVector eta_star;
  Eigen::MatrixXd zeta;  // cluster probabilities at (eta_star, W1)
};

BaseFit make_base(const FreeVector& eta_star, const Model& model);

/// One replicate. `sens` may be null except in linear mode. Non-convergence in
/// warm or cold mode is reported through `converged` and `diagnostics`.
ReplicateResult run_replicate(Mode mode, int index, std::uint64_t weights_seed, const WeightVector& w,
                              const BaseFit& base, const SensitivityMatrix* sens, const Model& model,
                              const BootstrapConfig& config);

struct ModeSummary {
  int n_ok = 0;
  int n_failed = 0;
  double median_seconds = 0.0;
  double fm_median = 0.0, fm_q05 = 0.0, fm_q95 = 0.0;
  double nmi_median = 0.0, nmi_q05 = 0.0, nmi_q95 = 0.0;
};

struct BootstrapRun {
  std::vector<ReplicateResult> replicates;  // replicate-major, modes in config order
  std::map<Mode, ModeSummary> summary;
  std::vector<std::string> failures;
};

std::uint64_t replicate_seed(std::uint64_t master_seed, int index);

/// n_boot weight draws shared by every requested mode. Replicates run in
/// parallel when config.exec is parallel; results do not depend on it.
BootstrapRun run_bootstrap(const BootstrapConfig& config, const BaseFit& base, const SensitivityMatrix* sens,
                           const Model& model);

std::map<Mode, ModeSummary> summarize(const std::vector<ReplicateResult>& replicates);

}  // namespace linboot
