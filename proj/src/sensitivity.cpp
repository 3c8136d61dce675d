#include "linboot/sensitivity.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "linboot/errors.hpp"

namespace linboot {

SensitivityMatrix compute_S(const DerivativeBundle& bundle, const FreeVector& eta_star) {
  const auto start = std::chrono::steady_clock::now();
  const Eigen::MatrixXd& H = bundle.hess;
  const Eigen::MatrixXd& C = bundle.cross;
  if (H.rows() != H.cols() || H.rows() != C.rows())
    throw DataError("compute_S: Hessian and cross-derivative shapes do not agree");

  Eigen::LLT<Eigen::MatrixXd> llt(H);
  const Eigen::MatrixXd L = llt.matrixL();
  if (llt.info() != Eigen::Success || !L.allFinite() || (L.rows() > 0 && !(L.diagonal().minCoeff() > 0.0)))
    throw NumericalError("not a strict local minimum: the Hessian at the base fit is not positive definite");

  SensitivityMatrix out;
  out.S = -llt.solve(C);
  out.eta_star = eta_star;
  out.min_pivot = L.rows() > 0 ? L.diagonal().minCoeff() : 0.0;
  const double scale = H.norm() * out.S.norm() + C.norm();
  out.residual = scale > 0.0 ? (H * out.S + C).norm() / scale : 0.0;
  if (!(out.residual <= 1e-8)) {
    std::ostringstream msg;
    msg << "compute_S: solve residual " << out.residual << " exceeds 1e-8 (ill-conditioned Hessian)";
    throw NumericalError(msg.str());
  }
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

SensitivityMatrix compute_S(const WeightedObjective& f, const FreeVector& eta_star) {
  const auto start = std::chrono::steady_clock::now();
  const DerivativeBundle b = f.bundle(eta_star, Eigen::VectorXd::Ones(f.n_weights()), true);
  SensitivityMatrix out = compute_S(b, eta_star);
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

FreeVector eta_lin(const SensitivityMatrix& sens, const WeightVector& w) {
  if (w.size() != sens.S.cols()) throw DataError("eta_lin: weight vector length does not match S");
  FreeVector out = sens.eta_star;
  out.noalias() += sens.S * (w.array() - 1.0).matrix();
  return out;
}

Eigen::MatrixXd predict_clustering(const FreeVector& eta_linear, const Model& model, const WeightVector& w) {
  return cluster_probs(eta_linear, model, w);
}

}  // namespace linboot
