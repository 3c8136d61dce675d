#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "linboot/model.hpp"
#include "linboot/objective.hpp"

namespace linboot {

struct Schedule {
  int bfgs_iters = 300;        // quasi-Newton warm-up iterations
  int newton_max_iters = 500;  // trust-region Newton cap
  double grad_tol = 1e-8;      // infinity norm of the gradient at convergence
  int precond_refresh = 50;    // Newton iterations between preconditioner refreshes
  double bfgs_handoff_tol = 1e-5;  // BFGS hands over to Newton below this gradient norm
};

struct FitResult {
  FreeVector eta_star;
  double kl_value = 0.0;
  double grad_norm = 0.0;  // infinity norm
  int bfgs_iterations = 0;
  int newton_iterations = 0;
  bool converged = false;
  double wall_time = 0.0;
  std::uint64_t init_seed = 0;
  std::string diagnostics;
  std::vector<double> accepted_values;  // objective after every accepted step, starting at x0
};

/// BFGS warm-up followed by a trust-region Newton-CG polish whose metric is a
/// positive-definite version of the Hessian at the BFGS end point. Accepted
/// steps never increase the objective beyond floating-point resolution.
/// A non-finite objective inside a step is treated as a rejected step; a
/// run that cannot make progress returns converged = false with diagnostics.
FitResult optimize(const Objective& f, const Eigen::VectorXd& x0, const Schedule& schedule = {});

FitResult optimize(const FreeVector& eta0, const WeightVector& w, const Model& model, const Schedule& schedule = {});

/// Deterministic 64-bit seed from a tuple of integers (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

struct KMeansResult {
  Eigen::MatrixXd centroids;  // K x dim
  std::vector<int> labels;
  double inertia = 0.0;
};

/// Lloyd's algorithm from k-means++ seeds, best inertia over n_init reseeds.
KMeansResult kmeans(const Eigen::MatrixXd& points, int K, std::uint64_t seed, int n_init = 10, int max_iter = 300);

/// Initial globals: per-gene spline fits clustered by k-means; centroids become
/// the cluster coefficients, sticks start at Beta(1, alpha) and the noise
/// precision at the inverse pooled residual variance of the per-gene fits.
GlobalParams kmeans_init(const Model& model, std::uint64_t seed);

/// Runs optimize from n_restarts k-means initializations (seeds derived from
/// master_seed) and returns the converged run with the lowest KL, ties going
/// to the lowest seed. Throws NumericalError listing every run when none
/// converges. `runs`, when given, receives every restart in index order.
FitResult multi_restart(const Model& model, const WeightVector& w, int n_restarts, std::uint64_t master_seed,
                        const Schedule& schedule = {}, Execution exec = Execution::parallel,
                        std::vector<FitResult>* runs = nullptr);

}  // namespace linboot
