#include "linboot/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "linboot/errors.hpp"

namespace linboot {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double inf_norm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

// Non-finite or throwing evaluations count as +infinity.
double safe_value_grad(const Objective& f, const VectorXd& x, VectorXd& g) {
  try {
    const double v = f.value_grad(x, g);
    return std::isfinite(v) && g.allFinite() ? v : std::numeric_limits<double>::infinity();
  } catch (const NumericalError&) {
    return std::numeric_limits<double>::infinity();
  }
}

double safe_value_grad_hess(const Objective& f, const VectorXd& x, VectorXd& g, MatrixXd& H) {
  try {
    const double v = f.value_grad_hess(x, g, H);
    return std::isfinite(v) && g.allFinite() && H.allFinite() ? v : std::numeric_limits<double>::infinity();
  } catch (const NumericalError&) {
    return std::numeric_limits<double>::infinity();
  }
}

// Accept a step that decreases f, or one inside the rounding noise of f that
// reduces the gradient.
bool acceptable(double f_old, double f_new, double g_old, double g_new) {
  if (!std::isfinite(f_new)) return false;
  if (f_new <= f_old) return true;
  const double noise = 1e-12 * std::max(1.0, std::abs(f_old));
  return f_new - f_old <= noise && g_new < g_old;
}

struct BfgsOutcome {
  int iterations = 0;
  bool stalled = false;
};

BfgsOutcome bfgs(const Objective& f, VectorXd& x, double& fx, VectorXd& g, const Schedule& sch,
                 std::vector<double>& trace) {
  const Eigen::Index n = x.size();
  MatrixXd Hinv = MatrixXd::Identity(n, n);
  bool scaled = false;
  BfgsOutcome out;
  VectorXd g_new(n);
  int flat_steps = 0;
  for (int it = 0; it < sch.bfgs_iters; ++it) {
    if (inf_norm(g) <= std::max(sch.grad_tol, sch.bfgs_handoff_tol)) break;
    // Decreases at rounding level: the Newton stage takes over.
    if (flat_steps >= 3) break;
    VectorXd p = -Hinv * g;
    double slope = g.dot(p);
    if (!(slope < 0.0)) {
      Hinv.setIdentity();
      scaled = false;
      p = -g;
      slope = -g.squaredNorm();
    }
    double t = scaled ? 1.0 : std::min(1.0, 1.0 / std::max(inf_norm(g), 1e-300));
    double f_new = std::numeric_limits<double>::infinity();
    VectorXd x_new;
    bool found = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + t * p;
      f_new = safe_value_grad(f, x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * t * slope) {
        found = true;
        break;
      }
      t *= 0.5;
    }
    if (!found) {
      out.stalled = true;
      break;
    }
    flat_steps = fx - f_new <= 1e-14 * std::max(1.0, std::abs(fx)) ? flat_steps + 1 : 0;
    const VectorXd s = x_new - x;
    const VectorXd y = g_new - g;
    const double ys = y.dot(s);
    if (ys > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        Hinv = MatrixXd::Identity(n, n) * (ys / y.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / ys;
      const VectorXd Hy = Hinv * y;
      Hinv.noalias() -= rho * (Hy * s.transpose() + s * Hy.transpose());
      Hinv.noalias() += (rho * rho * y.dot(Hy) + rho) * (s * s.transpose());
    }
    x = x_new;
    fx = f_new;
    g = g_new;
    trace.push_back(fx);
    out.iterations = it + 1;
  }
  return out;
}

// Positive-definite surrogate of a symmetric matrix (absolute eigenvalues,
// floored relative to the largest).
MatrixXd make_positive_definite(const MatrixXd& H) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(H);
  VectorXd lam = eig.eigenvalues().cwiseAbs();
  const double floor = std::max(1e-8 * lam.maxCoeff(), 1e-12);
  lam = lam.cwiseMax(floor);
  return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

// Steihaug truncated CG for min g'p + p'Hp/2 subject to |p| <= radius.
VectorXd steihaug(const MatrixXd& H, const VectorXd& g, double radius) {
  const Eigen::Index n = g.size();
  VectorXd z = VectorXd::Zero(n);
  VectorXd r = g;
  VectorXd d = -r;
  const double gnorm = g.norm();
  const double tol = std::min(0.5, std::sqrt(gnorm)) * gnorm;
  if (gnorm <= tol || gnorm == 0.0) return z;

  auto to_boundary = [&](const VectorXd& base, const VectorXd& dir) {
    const double a = dir.squaredNorm();
    const double b = 2.0 * base.dot(dir);
    const double c = base.squaredNorm() - radius * radius;
    const double tau = (-b + std::sqrt(std::max(0.0, b * b - 4.0 * a * c))) / (2.0 * a);
    return VectorXd(base + tau * dir);
  };

  for (Eigen::Index j = 0; j < 2 * n + 10; ++j) {
    const VectorXd Hd = H * d;
    const double dHd = d.dot(Hd);
    if (dHd <= 0.0) return to_boundary(z, d);
    const double rr = r.squaredNorm();
    const double alpha = rr / dHd;
    const VectorXd z_next = z + alpha * d;
    if (z_next.norm() >= radius) return to_boundary(z, d);
    const VectorXd r_next = r + alpha * Hd;
    if (r_next.norm() < tol) return z_next;
    d = -r_next + (r_next.squaredNorm() / rr) * d;
    z = z_next;
    r = r_next;
  }
  return z;
}

struct NewtonOutcome {
  int iterations = 0;
  std::string note;
};

NewtonOutcome newton_trust_region(const Objective& f, VectorXd& x, double& fx, VectorXd& g, const Schedule& sch,
                                  std::vector<double>& trace) {
  NewtonOutcome out;
  MatrixXd H;
  VectorXd g_tmp;
  fx = safe_value_grad_hess(f, x, g_tmp, H);
  if (!std::isfinite(fx)) {
    out.note = "objective not finite at Newton start";
    return out;
  }
  g = g_tmp;
  if (inf_norm(g) <= sch.grad_tol) return out;

  MatrixXd L = make_positive_definite(H).llt().matrixL();
  auto precondition = [&](const VectorXd& v) { return VectorXd(L.triangularView<Eigen::Lower>().solve(v)); };
  double radius = std::max(1.0, precondition(g).norm());
  double window_start = fx;

  VectorXd g_new;
  MatrixXd H_new;
  for (int it = 0; it < sch.newton_max_iters; ++it) {
    if (inf_norm(g) <= sch.grad_tol) break;
    if (it > 0 && sch.precond_refresh > 0 && it % sch.precond_refresh == 0) {
      // Progress over the last window stalled: re-anchor the metric here.
      if (window_start - fx <= 1e-6 * std::max(1.0, std::abs(fx))) {
        L = make_positive_definite(H).llt().matrixL();
        radius = std::max(radius, 1e-3);
      }
      window_start = fx;
    }

    const VectorXd g_hat = precondition(g);
    MatrixXd H_hat = L.triangularView<Eigen::Lower>().solve(H);
    H_hat = L.triangularView<Eigen::Lower>().solve(H_hat.transpose()).transpose();
    H_hat = 0.5 * (H_hat + H_hat.transpose()).eval();

    const VectorXd p_hat = steihaug(H_hat, g_hat, radius);
    const double predicted = -(g_hat.dot(p_hat) + 0.5 * p_hat.dot(H_hat * p_hat));
    const VectorXd p = L.transpose().triangularView<Eigen::Upper>().solve(p_hat);
    const VectorXd x_new = x + p;
    const double f_new = safe_value_grad_hess(f, x_new, g_new, H_new);
    const double actual = fx - f_new;
    const double rho = predicted > 0.0 ? actual / predicted : (actual >= 0.0 ? 1.0 : -1.0);

    const double step_norm = p_hat.norm();
    if (!std::isfinite(f_new) || rho < 0.25)
      radius = 0.25 * std::min(radius, std::max(step_norm, 1e-300));
    else if (rho > 0.75 && step_norm >= 0.99 * radius)
      radius = std::min(2.0 * radius, 1e12);

    out.iterations = it + 1;
    const bool near_noise = std::abs(actual) <= 1e-12 * std::max(1.0, std::abs(fx));
    if ((rho > 1e-4 || near_noise) && acceptable(fx, f_new, inf_norm(g), std::isfinite(f_new) ? inf_norm(g_new) : 0.0)) {
      x = x_new;
      fx = f_new;
      g = g_new;
      H = H_new;
      trace.push_back(fx);
    }
    if (radius < 1e-14) {
      out.note = "trust region collapsed";
      break;
    }
  }
  return out;
}

}  // namespace

FitResult optimize(const Objective& f, const VectorXd& x0, const Schedule& schedule) {
  const auto start = std::chrono::steady_clock::now();
  FitResult res;
  VectorXd x = x0;
  VectorXd g;
  double fx = safe_value_grad(f, x, g);
  if (!std::isfinite(fx)) {
    res.eta_star = x0;
    res.kl_value = fx;
    res.grad_norm = std::numeric_limits<double>::infinity();
    res.diagnostics = "objective not finite at the starting point";
    return res;
  }
  res.accepted_values.push_back(fx);

  const BfgsOutcome b = bfgs(f, x, fx, g, schedule, res.accepted_values);
  res.bfgs_iterations = b.iterations;
  std::ostringstream diag;
  if (b.stalled) diag << "bfgs line search stalled after " << b.iterations << " iterations; ";

  const NewtonOutcome n = newton_trust_region(f, x, fx, g, schedule, res.accepted_values);
  res.newton_iterations = n.iterations;
  if (!n.note.empty()) diag << n.note << "; ";

  res.eta_star = x;
  res.kl_value = fx;
  res.grad_norm = inf_norm(g);
  res.converged = std::isfinite(fx) && res.grad_norm <= schedule.grad_tol;
  if (!res.converged) diag << "gradient norm " << res.grad_norm << " above tolerance " << schedule.grad_tol;
  res.diagnostics = diag.str();
  res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

FitResult optimize(const FreeVector& eta0, const WeightVector& w, const Model& model, const Schedule& schedule) {
  const MixtureObjective obj(model);
  return optimize(AtWeights(obj, w), eta0, schedule);
}

std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(a) ^ b) ^ c);
}

FitResult multi_restart(const Model& model, const WeightVector& w, int n_restarts, std::uint64_t master_seed,
                        const Schedule& schedule, Execution exec, std::vector<FitResult>* runs) {
  if (n_restarts < 1) throw UsageError("multi_restart needs at least one restart");
  std::vector<FitResult> results(static_cast<std::size_t>(n_restarts));
  std::vector<std::string> errors(static_cast<std::size_t>(n_restarts));

  auto run_one = [&](int r) {
    const std::uint64_t seed = derive_seed(master_seed, static_cast<std::uint64_t>(r));
    try {
      const GlobalParams init = kmeans_init(model, seed);
      results[r] = optimize(pack(init), w, model, schedule);
    } catch (const std::exception& e) {
      results[r].converged = false;
      results[r].diagnostics = e.what();
    }
    results[r].init_seed = seed;
  };

  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int r = 0; r < n_restarts; ++r) run_one(r);
  } else {
    for (int r = 0; r < n_restarts; ++r) run_one(r);
  }

  const FitResult* best = nullptr;
  for (const FitResult& fr : results) {
    if (!fr.converged) continue;
    if (best == nullptr || fr.kl_value < best->kl_value ||
        (fr.kl_value == best->kl_value && fr.init_seed < best->init_seed))
      best = &fr;
  }
  if (best == nullptr) {
    std::ostringstream msg;
    msg << "all " << n_restarts << " restarts failed to converge:";
    for (std::size_t r = 0; r < results.size(); ++r)
      msg << "\n  restart " << r << " (seed " << results[r].init_seed << "): kl=" << results[r].kl_value
          << " grad=" << results[r].grad_norm << " " << results[r].diagnostics;
    if (runs != nullptr) *runs = results;
    throw NumericalError(msg.str());
  }
  FitResult out = *best;
  if (runs != nullptr) *runs = std::move(results);
  return out;
}

}  // namespace linboot
