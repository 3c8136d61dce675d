#pragma once

#include <functional>

#include <Eigen/Dense>

#include "linboot/model.hpp"
#include "linboot/objective.hpp"

namespace linboot {

struct BundleRequest {
  bool hessian = true;
  bool cross = true;
};

/// Exact derivatives of marginal_kl, differentiating through the closed-form
/// local optimum. Per-gene leaf terms are differentiated with small forward
/// jets and chained through the cluster summaries (expected log stick
/// weights, beta'X'y, beta'X'X beta, 1'X beta) to eta.
DerivativeBundle kl_bundle(const FreeVector& eta, const WeightVector& w, const Model& model,
                           BundleRequest request = {}, Execution exec = Execution::parallel);

/// Same kernel accumulated in one gene-ordered pass (serial reference).
DerivativeBundle kl_bundle_serial(const FreeVector& eta, const WeightVector& w, const Model& model,
                                  BundleRequest request = {});

/// Value and gradient only.
double kl_value_grad(const FreeVector& eta, const WeightVector& w, const Model& model, Eigen::VectorXd& grad,
                     Execution exec = Execution::parallel);

Eigen::VectorXd kl_grad(const FreeVector& eta, const WeightVector& w, const Model& model);
Eigen::MatrixXd kl_hessian(const FreeVector& eta, const WeightVector& w, const Model& model);
Eigen::MatrixXd kl_cross(const FreeVector& eta, const WeightVector& w, const Model& model);

/// Generic-scalar route: marginal_kl_generic evaluated once with a dense Jet
/// over (eta, w). Cost grows with (dim + n_genes)^2 per operation, so this is
/// meant for small problems and as a cross-check of kl_bundle.
DerivativeBundle kl_bundle_dense(const FreeVector& eta, const WeightVector& w, const Model& model);

/// Central differences of a scalar function.
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                            double step);

/// Central differences of a vector function; column j is d f / d x_j.
Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double step);

}  // namespace linboot
