#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace linboot {

/// Row-stochastic n_g x K matrix of cluster probabilities.
using ClusterProbs = Eigen::MatrixXd;

using GenePair = std::pair<int, int>;

struct CoclusterStats {
  std::vector<GenePair> pairs;
  std::vector<double> sd;         // bootstrap SD per pair (divisor n - 1)
  std::vector<double> base_prob;  // co-clustering probability at the base fit, if supplied
};

/// Soft Fowlkes-Mallows index. With A = Z Z' and B = Z~ Z~' (all ordered pairs,
/// diagonal included) FM = <A, B> / (|A| |B|), computed through the K x K
/// products Z'Z~, Z'Z and Z~'Z~ without forming the n_g x n_g matrices.
double fm_index(const ClusterProbs& base, const ClusterProbs& other);

/// Normalized mutual information of the label pair drawn by picking a gene
/// uniformly and labelling it independently under both clusterings.
/// Throws DataError("degenerate-clustering ...") when either marginal has
/// zero entropy.
double nmi(const ClusterProbs& base, const ClusterProbs& other);

/// Sample SD across replicates of zeta_g1' zeta_g2 for every pair.
CoclusterStats cocluster_sd(const std::vector<ClusterProbs>& replicates, const std::vector<GenePair>& pairs);

/// Same statistic when the per-replicate co-clustering probabilities are
/// already extracted: probs[r][p] for replicate r and pair p.
std::vector<double> cocluster_sd_from_probs(const std::vector<std::vector<double>>& probs);

/// All unordered pairs g1 < g2 among the given genes.
std::vector<GenePair> all_pairs(const std::vector<int>& genes);

/// zeta_g1' zeta_g2 for each pair.
std::vector<double> cocluster_probs(const ClusterProbs& zeta, const std::vector<GenePair>& pairs);

// Summary statistics used by reports and acceptance checks.
double median(std::vector<double> v);
double quantile(std::vector<double> v, double p);
double pearson(const std::vector<double>& x, const std::vector<double>& y);
/// Pearson correlation of mid-ranks.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace linboot
