#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "linboot/bootstrap.hpp"
#include "linboot/kernels.hpp"
#include "linboot/optimizer.hpp"

namespace linboot {

struct RunConfig {
  int K = 30;
  int degree = 3;
  int df = 7;
  Priors priors;
  Schedule schedule;
  Weighting weighting = Weighting::likelihood;
  int n_restarts = 200;
  int cold_restarts = 10;
  int n_boot = 200;
  std::vector<std::string> modes{"linear", "warm", "cold"};
  std::uint64_t master_seed = 1;
  int pair_genes = 50;             // co-clustering pairs are all pairs among this many genes
  double sd_threshold = 0.03;      // reporting threshold for co-clustering SDs
  bool linear_kl = false;
  int workers = 0;                 // 0: all available cores

  // simulate
  int sim_genes = 100;
  int sim_clusters = 3;
  int sim_times = 7;
  int sim_replicates = 2;
  double sim_separation = 5.0;
  double sim_tau = 0.0;            // 0: prior mean of the noise precision

  /// Throws UsageError on the first invalid setting.
  void validate() const;

  std::vector<Mode> parsed_modes() const;

  /// Settings a fit depends on; stored in archives and digested.
  nlohmann::json fit_json() const;
};

std::string to_string(Weighting w);
Weighting parse_weighting(const std::string& s);

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string provenance;  // "published setting" or "implementation choice"
  std::string description;
};

/// Every configuration key with its default and where the default comes from.
std::vector<ConfigKey> config_keys();

}  // namespace linboot
