#include "linboot/config.hpp"

#include "linboot/errors.hpp"

namespace linboot {

std::string to_string(Weighting w) { return w == Weighting::per_gene ? "per_gene" : "likelihood"; }

Weighting parse_weighting(const std::string& s) {
  if (s == "likelihood") return Weighting::likelihood;
  if (s == "per_gene") return Weighting::per_gene;
  throw UsageError("unknown weighting '" + s + "' (expected likelihood or per_gene)");
}

std::vector<Mode> RunConfig::parsed_modes() const {
  std::vector<Mode> out;
  for (const std::string& m : modes) out.push_back(parse_mode(m));
  return out;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw UsageError(msg);
  };
  require(K >= 1, "K must be at least 1");
  require(degree >= 0, "degree must be non-negative");
  require(df > degree, "df must exceed degree");
  require(n_restarts >= 1, "n_restarts must be at least 1");
  require(cold_restarts >= 1, "cold_restarts must be at least 1");
  require(n_boot >= 1, "n_boot must be at least 1");
  require(!modes.empty(), "at least one bootstrap mode is required");
  require(pair_genes >= 0, "pair_genes must be non-negative");
  require(sd_threshold >= 0.0, "sd_threshold must be non-negative");
  require(workers >= 0, "workers must be non-negative");
  require(schedule.bfgs_iters >= 0 && schedule.newton_max_iters >= 0, "iteration limits must be non-negative");
  require(schedule.grad_tol > 0.0, "grad_tol must be positive");
  require(schedule.precond_refresh >= 1, "precond_refresh must be at least 1");
  require(sim_genes >= 1 && sim_clusters >= 1 && sim_times >= 1 && sim_replicates >= 1,
          "simulation sizes must be positive");
  require(sim_tau >= 0.0, "sim_tau must be non-negative");
  try {
    priors.validate();
    (void)parsed_modes();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

nlohmann::json RunConfig::fit_json() const {
  return {{"K", K},
          {"degree", degree},
          {"df", df},
          {"weighting", to_string(weighting)},
          {"n_restarts", n_restarts},
          {"master_seed", master_seed},
          {"bfgs_iters", schedule.bfgs_iters},
          {"newton_max_iters", schedule.newton_max_iters},
          {"grad_tol", schedule.grad_tol},
          {"precond_refresh", schedule.precond_refresh}};
}

std::vector<ConfigKey> config_keys() {
  const std::string pub = "published setting";
  const std::string impl = "implementation choice";
  const RunConfig d;
  auto num = [](double x) {
    std::string s = std::to_string(x);
    s.erase(s.find_last_not_of('0') + 1);
    if (s.back() == '.') s.pop_back();
    return s;
  };
  return {
      {"K", std::to_string(d.K), pub, "truncation level"},
      {"degree", std::to_string(d.degree), pub, "B-spline degree"},
      {"df", std::to_string(d.df), pub, "B-spline degrees of freedom"},
      {"alpha", num(d.priors.alpha), pub, "DP concentration"},
      {"beta_mean", num(d.priors.beta_mean), pub, "prior mean of spline coefficients"},
      {"beta_var", num(d.priors.beta_var), pub, "prior variance of spline coefficients"},
      {"b_mean", num(d.priors.b_mean), pub, "offset prior mean"},
      {"b_var", num(d.priors.b_var), pub, "offset prior variance"},
      {"tau_shape", num(d.priors.tau_shape), pub, "Gamma shape of the noise precision"},
      {"tau_scale", num(d.priors.tau_scale), pub, "Gamma scale of the noise precision"},
      {"bfgs_iters", std::to_string(d.schedule.bfgs_iters), pub, "BFGS iterations before Newton"},
      {"newton_max_iters", std::to_string(d.schedule.newton_max_iters), impl, "trust-region Newton cap"},
      {"grad_tol", "1e-08", impl, "gradient infinity-norm tolerance"},
      {"precond_refresh", std::to_string(d.schedule.precond_refresh), impl, "Newton iterations between preconditioner refreshes"},
      {"weighting", "likelihood", impl, "likelihood or per_gene"},
      {"n_restarts", std::to_string(d.n_restarts), pub, "k-means restarts for the base fit"},
      {"cold_restarts", std::to_string(d.cold_restarts), pub, "restarts per cold-start replicate"},
      {"n_boot", std::to_string(d.n_boot), pub, "bootstrap replicates"},
      {"modes", "linear,warm,cold", pub, "bootstrap estimators"},
      {"master_seed", std::to_string(d.master_seed), impl, "root of every derived seed"},
      {"pair_genes", std::to_string(d.pair_genes), impl, "genes whose pairs get co-clustering SDs"},
      {"sd_threshold", num(d.sd_threshold), pub, "co-clustering SD reporting threshold"},
      {"linear_kl", "false", impl, "evaluate the objective at linearized parameters"},
      {"workers", "0", impl, "worker threads (0: all cores; env LINBOOT_WORKERS)"},
      {"sim_genes", std::to_string(d.sim_genes), impl, "simulated genes"},
      {"sim_clusters", std::to_string(d.sim_clusters), impl, "simulated clusters"},
      {"sim_times", std::to_string(d.sim_times), impl, "simulated time points"},
      {"sim_replicates", std::to_string(d.sim_replicates), impl, "replicates per time point"},
      {"sim_separation", num(d.sim_separation), impl, "cluster spread in noise SDs"},
      {"sim_tau", "0", impl, "true noise precision (0: prior mean)"},
  };
}

}  // namespace linboot
