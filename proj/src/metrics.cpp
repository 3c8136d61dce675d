#include "linboot/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "linboot/errors.hpp"

namespace linboot {

double fm_index(const ClusterProbs& base, const ClusterProbs& other) {
  if (base.rows() != other.rows()) throw DataError("fm_index: clusterings cover different gene counts");
  const double num = (base.transpose() * other).squaredNorm();
  const double den = (base.transpose() * base).norm() * (other.transpose() * other).norm();
  if (!(den > 0.0)) throw DataError("fm_index: empty co-clustering matrix");
  return num / den;
}

namespace {

double entropy(const Eigen::VectorXd& p) {
  double h = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k)
    if (p[k] > 0.0) h -= p[k] * std::log(p[k]);
  return h;
}

}  // namespace

double nmi(const ClusterProbs& base, const ClusterProbs& other) {
  if (base.rows() != other.rows()) throw DataError("nmi: clusterings cover different gene counts");
  const double n = static_cast<double>(base.rows());
  const Eigen::MatrixXd joint = base.transpose() * other / n;
  const Eigen::VectorXd p1 = base.colwise().sum().transpose() / n;
  const Eigen::VectorXd p2 = other.colwise().sum().transpose() / n;
  const double h1 = entropy(p1);
  const double h2 = entropy(p2);
  if (!(h1 > 0.0) || !(h2 > 0.0))
    throw DataError("degenerate-clustering: a clustering puts all mass on one cluster (zero entropy)");
  double mi = 0.0;
  for (Eigen::Index i = 0; i < joint.rows(); ++i)
    for (Eigen::Index j = 0; j < joint.cols(); ++j) {
      const double pij = joint(i, j);
      if (pij > 0.0) mi += pij * std::log(pij / (p1[i] * p2[j]));
    }
  return std::clamp(mi / std::sqrt(h1 * h2), 0.0, 1.0);
}

std::vector<double> cocluster_probs(const ClusterProbs& zeta, const std::vector<GenePair>& pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& [a, b] : pairs) out.push_back(zeta.row(a).dot(zeta.row(b)));
  return out;
}

std::vector<double> cocluster_sd_from_probs(const std::vector<std::vector<double>>& probs) {
  if (probs.size() < 2) throw DataError("cocluster_sd: need at least two replicates");
  const std::size_t n_pairs = probs.front().size();
  if (n_pairs == 0) throw DataError("cocluster_sd: empty pair list");
  std::vector<double> sd(n_pairs, 0.0);
  const double nb = static_cast<double>(probs.size());
  for (std::size_t p = 0; p < n_pairs; ++p) {
    double mean = 0.0;
    for (const auto& r : probs) mean += r[p];
    mean /= nb;
    double ss = 0.0;
    for (const auto& r : probs) ss += (r[p] - mean) * (r[p] - mean);
    sd[p] = std::sqrt(ss / (nb - 1.0));
  }
  return sd;
}

CoclusterStats cocluster_sd(const std::vector<ClusterProbs>& replicates, const std::vector<GenePair>& pairs) {
  if (pairs.empty()) throw DataError("cocluster_sd: empty pair list");
  if (replicates.size() < 2) throw DataError("cocluster_sd: need at least two replicates");
  std::vector<std::vector<double>> probs;
  probs.reserve(replicates.size());
  for (const ClusterProbs& z : replicates) probs.push_back(cocluster_probs(z, pairs));
  CoclusterStats out;
  out.pairs = pairs;
  out.sd = cocluster_sd_from_probs(probs);
  return out;
}

std::vector<GenePair> all_pairs(const std::vector<int>& genes) {
  std::vector<GenePair> out;
  for (std::size_t i = 0; i < genes.size(); ++i)
    for (std::size_t j = i + 1; j < genes.size(); ++j) out.emplace_back(genes[i], genes[j]);
  return out;
}

double quantile(std::vector<double> v, double p) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DataError("pearson: need two equal-length samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nan("");
  return sxy / std::sqrt(sxx * syy);
}

namespace {

std::vector<double> midranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = rank;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(midranks(x), midranks(y));
}

}  // namespace linboot
