#pragma once

#include <Eigen/Dense>

#include "linboot/model.hpp"
#include "linboot/objective.hpp"

namespace linboot {

/// d eta*(W) / dW at W = 1: the solution S of H S = -C with H the Hessian and
/// C the cross derivatives of the weighted objective at the base optimum.
struct SensitivityMatrix {
  Eigen::MatrixXd S;        // dim(eta) x n_weights
  FreeVector eta_star;
  double min_pivot = 0.0;   // smallest diagonal entry of the Cholesky factor of H
  double residual = 0.0;    // |H S + C| / (|H| |S| + |C|), Frobenius norms
  double wall_time = 0.0;   // seconds spent forming and solving
};

/// One Cholesky factorization of H and n_weights solves; H^-1 is never formed.
/// Throws NumericalError("not a strict local minimum ...") when H is not
/// positive definite, and when the solve residual exceeds 1e-8.
SensitivityMatrix compute_S(const DerivativeBundle& bundle, const FreeVector& eta_star);

/// Evaluates the bundle at (eta_star, all-ones weights) and calls compute_S.
SensitivityMatrix compute_S(const WeightedObjective& f, const FreeVector& eta_star);

/// eta* + S (w - 1).
FreeVector eta_lin(const SensitivityMatrix& sens, const WeightVector& w);

/// Cluster probabilities at the linearized parameters, using the weighted local
/// update at the replicate's weights.
Eigen::MatrixXd predict_clustering(const FreeVector& eta_linear, const Model& model, const WeightVector& w);

}  // namespace linboot
