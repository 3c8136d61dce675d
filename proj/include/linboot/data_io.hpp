#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "linboot/bootstrap.hpp"
#include "linboot/model.hpp"

namespace linboot {

struct SimulationTruth {
  std::vector<int> true_labels;  // 1-based cluster labels
  Eigen::MatrixXd true_beta;     // K_true x df
  double true_tau = 1.0;
  Eigen::VectorXd true_offsets;
  Eigen::VectorXd true_pi;       // stick-breaking proportions used for labels
};

struct SimulationSpec {
  int n_genes = 100;
  int K_true = 3;
  int degree = 3;
  int df = 7;
  double separation = 5.0;  // spread of cluster coefficients, in noise standard deviations
  std::optional<double> true_tau;  // defaults to the prior mean shape * scale
  std::uint64_t seed = 1;
};

struct Simulated {
  Dataset data;
  SimulationTruth truth;
};

/// Draws a dataset from the generative model: Beta(1, alpha) sticks truncated
/// at K_true, multinomial labels, cluster coefficients
/// beta_mean + separation * sigma * xi with xi ~ N(0, I), offsets from the
/// offset prior and Gaussian noise with precision true_tau.
Simulated simulate(const SimulationSpec& spec, const TimeGrid& grid, const Priors& priors);

/// Evenly spaced grid 0..n_times-1 with every time repeated n_replicates times.
TimeGrid regular_grid(int n_times, int n_replicates);

/// Long-format CSV with header gene_id,time,replicate,expression. Observation
/// columns are ordered by (time, replicate); every gene must have every
/// observation present in the file.
Dataset load_csv(const std::string& path, int degree, int df);
void save_csv(const std::string& path, const Dataset& data);

std::uint64_t fnv1a(const std::string& bytes);
std::uint64_t dataset_digest(const Dataset& data);

inline constexpr int kArchiveVersion = 1;

struct FitArchive {
  int format_version = kArchiveVersion;
  Priors priors;
  nlohmann::json config;  // settings the fit depends on
  std::uint64_t config_digest = 0;
  std::uint64_t data_digest = 0;
  FreeVector eta_star;
  double kl_value = 0.0;
  double grad_norm = 0.0;
  bool converged = false;
  double fit_seconds = 0.0;
  std::optional<Eigen::MatrixXd> S;
  double S_seconds = 0.0;
};

std::uint64_t config_digest(const nlohmann::json& config);

void save_archive(const std::string& path, const FitArchive& a);
/// Refuses unknown versions and archives whose stored digest does not match
/// their config.
FitArchive load_archive(const std::string& path);

/// Columns: replicate,mode,fm,nmi,kl,seconds,weights_seed,converged.
void write_replicate_table(const std::string& path, const std::vector<ReplicateResult>& rows);
std::vector<ReplicateResult> read_replicate_table(const std::string& path);

/// Long table replicate,mode,g1,g2,prob of per-replicate co-clustering probabilities.
void write_cocluster_table(const std::string& path, const std::vector<ReplicateResult>& rows,
                           const std::vector<GenePair>& pairs);

struct CoclusterRow {
  int replicate = 0;
  Mode mode = Mode::linear;
  int g1 = 0;
  int g2 = 0;
  double prob = 0.0;
};
std::vector<CoclusterRow> read_cocluster_table(const std::string& path);

/// Shortest text that parses back to the same double (17 significant digits).
std::string format_double(double x);

}  // namespace linboot
