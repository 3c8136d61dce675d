#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "linboot/errors.hpp"
#include "linboot/optimizer.hpp"

namespace linboot {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;

KMeansResult lloyd(const MatrixXd& pts, int K, std::mt19937_64& rng, int max_iter) {
  const Index n = pts.rows();
  KMeansResult res;
  res.centroids.resize(K, pts.cols());

  // k-means++ seeding.
  std::uniform_int_distribution<Index> pick(0, n - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  res.centroids.row(0) = pts.row(pick(rng));
  Eigen::VectorXd d2 = (pts.rowwise() - res.centroids.row(0)).rowwise().squaredNorm();
  for (int k = 1; k < K; ++k) {
    const double total = d2.sum();
    Index chosen = 0;
    if (total > 0.0) {
      double u = unif(rng) * total;
      for (chosen = 0; chosen < n - 1; ++chosen) {
        u -= d2[chosen];
        if (u <= 0.0) break;
      }
    } else {
      chosen = pick(rng);
    }
    res.centroids.row(k) = pts.row(chosen);
    d2 = d2.cwiseMin((pts.rowwise() - res.centroids.row(k)).rowwise().squaredNorm());
  }

  res.labels.assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    Eigen::VectorXd best_d(n);
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int k = 0; k < K; ++k) {
        const double d = (pts.row(i) - res.centroids.row(k)).squaredNorm();
        if (d < bd) {
          bd = d;
          best = k;
        }
      }
      best_d[i] = bd;
      if (res.labels[i] != best) {
        res.labels[i] = best;
        changed = true;
      }
    }
    MatrixXd sums = MatrixXd::Zero(K, pts.cols());
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(K);
    for (Index i = 0; i < n; ++i) {
      sums.row(res.labels[i]) += pts.row(i);
      ++counts[res.labels[i]];
    }
    for (int k = 0; k < K; ++k) {
      if (counts[k] > 0) {
        res.centroids.row(k) = sums.row(k) / counts[k];
      } else {
        // Empty cluster: move it onto the worst-fitted point.
        Index far = 0;
        best_d.maxCoeff(&far);
        res.centroids.row(k) = pts.row(far);
        best_d[far] = 0.0;
        changed = true;
      }
    }
    if (!changed) break;
  }

  res.inertia = 0.0;
  for (Index i = 0; i < n; ++i) res.inertia += (pts.row(i) - res.centroids.row(res.labels[i])).squaredNorm();
  return res;
}

}  // namespace

KMeansResult kmeans(const MatrixXd& points, int K, std::uint64_t seed, int n_init, int max_iter) {
  if (K < 1) throw UsageError("k-means needs K >= 1");
  if (points.rows() < K)
    throw DataError("k-means: K=" + std::to_string(K) + " exceeds the number of points (" +
                    std::to_string(points.rows()) + ")");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, n_init); ++r) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r), 0x6b6d65616e73ULL));
    KMeansResult cur = lloyd(points, K, rng, max_iter);
    if (cur.inertia < best.inertia) best = std::move(cur);
  }
  return best;
}

GlobalParams kmeans_init(const Model& model, std::uint64_t seed) {
  const int K = model.K();
  const Dataset& data = model.data();
  const Index ng = data.n_genes();
  if (K > ng)
    throw DataError("truncation level K=" + std::to_string(K) + " exceeds the number of genes (" +
                    std::to_string(ng) + ")");
  const int df = model.df();
  MatrixXd coefs(ng, df);
  double rss = 0.0;
  for (Index g = 0; g < ng; ++g) {
    const LsFit fit = ls_fit(data.basis, Eigen::VectorXd(data.y.row(g).transpose()));
    coefs.row(g) = fit.coef.transpose();
    rss += fit.residual_norm * fit.residual_norm;
  }
  const KMeansResult km = kmeans(coefs, K, seed);

  GlobalParams g;
  g.log_stick_a = Eigen::VectorXd::Zero(K - 1);
  g.log_stick_b = Eigen::VectorXd::Constant(K - 1, std::log(model.priors().alpha));
  g.beta = km.centroids;
  const double dof = static_cast<double>(ng) * static_cast<double>(data.n_obs() - df);
  const double var = std::max(rss / std::max(dof, 1.0), 1e-10);
  g.log_tau = -std::log(var);
  return g;
}

}  // namespace linboot
