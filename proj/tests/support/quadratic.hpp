#pragma once

#include <Eigen/Dense>

#include "linboot/objective.hpp"

namespace ref {

/// Sum over columns y_g of (w_g / 2) (eta - y_g)' A (eta - y_g). Its optimum is the
/// weighted mean of the columns, so S has the closed form (y_g - mean) / n.
class WeightedQuadratic final : public linboot::WeightedObjective {
 public:
  WeightedQuadratic(Eigen::MatrixXd A, Eigen::MatrixXd Y) : A_(std::move(A)), Y_(std::move(Y)) {}
  Eigen::Index dim() const override { return A_.rows(); }
  Eigen::Index n_weights() const override { return Y_.cols(); }
  double value(const Eigen::VectorXd& eta, const Eigen::VectorXd& w) const override {
    double v = 0.0;
    for (Eigen::Index g = 0; g < Y_.cols(); ++g) {
      const Eigen::VectorXd d = eta - Y_.col(g);
      v += 0.5 * w[g] * d.dot(A_ * d);
    }
    return v;
  }
  double value_grad(const Eigen::VectorXd& eta, const Eigen::VectorXd& w, Eigen::VectorXd& grad) const override {
    grad = Eigen::VectorXd::Zero(dim());
    for (Eigen::Index g = 0; g < Y_.cols(); ++g) grad += w[g] * (A_ * (eta - Y_.col(g)));
    return value(eta, w);
  }
  linboot::DerivativeBundle bundle(const Eigen::VectorXd& eta, const Eigen::VectorXd& w, bool with_cross) const override {
    linboot::DerivativeBundle b;
    b.value = value_grad(eta, w, b.grad);
    b.hess = w.sum() * A_;
    if (with_cross) {
      b.cross.resize(dim(), Y_.cols());
      for (Eigen::Index g = 0; g < Y_.cols(); ++g) b.cross.col(g) = A_ * (eta - Y_.col(g));
    }
    return b;
  }

 private:
  Eigen::MatrixXd A_, Y_;
};

}  // namespace ref
