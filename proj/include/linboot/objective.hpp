#pragma once

#include <Eigen/Dense>

#include "linboot/model.hpp"
#include "linboot/parallel.hpp"

namespace linboot {

/// Value and derivatives of a weighted objective KL(eta, W) at one point.
struct DerivativeBundle {
  double value = 0.0;
  Eigen::VectorXd grad;   // dKL/deta
  Eigen::MatrixXd hess;   // d2KL/deta deta'
  Eigen::MatrixXd cross;  // d2KL/deta dW', dim(eta) x n_weights
};

/// Smooth unconstrained objective consumed by the optimizer.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual Eigen::Index dim() const = 0;
  virtual double value(const Eigen::VectorXd& x) const = 0;
  virtual double value_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const = 0;
  virtual double value_grad_hess(const Eigen::VectorXd& x, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const = 0;
};

/// Twice-differentiable objective with one weight per datum. The sensitivity
/// machinery only talks to this interface, so analytic toy objectives can
/// stand in for the mixture model.
class WeightedObjective {
 public:
  virtual ~WeightedObjective() = default;
  virtual Eigen::Index dim() const = 0;
  virtual Eigen::Index n_weights() const = 0;
  virtual double value(const Eigen::VectorXd& eta, const Eigen::VectorXd& w) const = 0;
  virtual double value_grad(const Eigen::VectorXd& eta, const Eigen::VectorXd& w, Eigen::VectorXd& grad) const = 0;
  virtual DerivativeBundle bundle(const Eigen::VectorXd& eta, const Eigen::VectorXd& w, bool with_cross) const = 0;
};

/// A WeightedObjective with its weights held fixed.
class AtWeights final : public Objective {
 public:
  AtWeights(const WeightedObjective& f, Eigen::VectorXd w) : f_(f), w_(std::move(w)) {}
  Eigen::Index dim() const override { return f_.dim(); }
  double value(const Eigen::VectorXd& x) const override { return f_.value(x, w_); }
  double value_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
    return f_.value_grad(x, w_, grad);
  }
  double value_grad_hess(const Eigen::VectorXd& x, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const override {
    DerivativeBundle b = f_.bundle(x, w_, false);
    grad = std::move(b.grad);
    hess = std::move(b.hess);
    return b.value;
  }

 private:
  const WeightedObjective& f_;
  Eigen::VectorXd w_;
};

/// The marginal KL of the spline mixture as a WeightedObjective.
class MixtureObjective final : public WeightedObjective {
 public:
  explicit MixtureObjective(const Model& model, Execution exec = Execution::parallel)
      : model_(model), exec_(exec) {}
  Eigen::Index dim() const override { return model_.dim(); }
  Eigen::Index n_weights() const override { return model_.n_genes(); }
  double value(const Eigen::VectorXd& eta, const Eigen::VectorXd& w) const override;
  double value_grad(const Eigen::VectorXd& eta, const Eigen::VectorXd& w, Eigen::VectorXd& grad) const override;
  DerivativeBundle bundle(const Eigen::VectorXd& eta, const Eigen::VectorXd& w, bool with_cross) const override;
  const Model& model() const { return model_; }

 private:
  const Model& model_;
  Execution exec_;
};

}  // namespace linboot
