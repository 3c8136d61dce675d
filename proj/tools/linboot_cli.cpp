// linboot: fit a spline mixture, compute weight sensitivities and run
// linear / warm / cold bootstrap replicates.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "linboot/bootstrap.hpp"
#include "linboot/config.hpp"
#include "linboot/data_io.hpp"
#include "linboot/derivatives.hpp"
#include "linboot/errors.hpp"
#include "linboot/metrics.hpp"
#include "linboot/parallel.hpp"
#include "linboot/sensitivity.hpp"

namespace fs = std::filesystem;
using namespace linboot;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Paths {
  std::string data = "data.csv";
  std::string truth = "truth.json";
  std::string fit = "fit.json";
  std::string replicates = "replicates.csv";
  std::string cocluster = "cocluster.csv";
  std::string out_dir = ".";
};

std::string scratch_path(const std::string& p) {
  const char* scratch = std::getenv("LINBOOT_SCRATCH");
  if (scratch == nullptr || *scratch == '\0' || fs::path(p).is_absolute()) return p;
  return (fs::path(scratch) / p).string();
}

void require_file(const std::string& path, const std::string& what, const std::string& command) {
  if (!fs::exists(path))
    throw DataError(what + " '" + path + "' not found; run `linboot " + command + "` first");
}

std::string describe(const std::string& key, const std::string& extra = "") {
  for (const ConfigKey& k : config_keys())
    if (k.name == key) return k.description + " (" + k.provenance + ", default " + k.default_value + ")" + extra;
  return extra;
}

Model load_model(const RunConfig& cfg, const Paths& paths) {
  require_file(paths.data, "dataset", "simulate");
  Dataset d = load_csv(paths.data, cfg.degree, cfg.df);
  return Model(std::move(d), cfg.priors, cfg.K, cfg.weighting);
}

FitArchive load_matching_archive(const RunConfig& cfg, const Paths& paths, const Model& model) {
  require_file(paths.fit, "fit archive", "fit");
  FitArchive a = load_archive(paths.fit);
  if (a.config != cfg.fit_json())
    throw DataError("fit archive '" + paths.fit + "' was made with different settings:\n  archive: " +
                    a.config.dump() + "\n  current: " + cfg.fit_json().dump());
  const nlohmann::json pa = {a.priors.alpha, a.priors.beta_mean, a.priors.beta_var, a.priors.b_mean,
                             a.priors.b_var, a.priors.tau_shape, a.priors.tau_scale};
  const nlohmann::json pc = {cfg.priors.alpha, cfg.priors.beta_mean, cfg.priors.beta_var, cfg.priors.b_mean,
                             cfg.priors.b_var, cfg.priors.tau_shape, cfg.priors.tau_scale};
  if (pa != pc) throw DataError("fit archive '" + paths.fit + "' was made with different priors");
  if (a.data_digest != dataset_digest(model.data()))
    throw DataError("fit archive '" + paths.fit + "' belongs to a different dataset than '" + paths.data + "'");
  if (a.eta_star.size() != model.dim()) throw DataError("fit archive parameter vector has the wrong length");
  return a;
}

std::ofstream open_table(const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / name);
  if (!out) throw DataError("cannot write '" + (fs::path(dir) / name).string() + "'");
  return out;
}

// Emits a table to stdout and to out_dir/name.
void emit(const std::string& dir, const std::string& name, const std::string& title, const std::string& body) {
  std::cout << "# " << title << '\n' << body << '\n';
  std::ofstream out = open_table(dir, name);
  out << body;
}

int cmd_simulate(const RunConfig& cfg, const Paths& paths) {
  SimulationSpec spec;
  spec.n_genes = cfg.sim_genes;
  spec.K_true = cfg.sim_clusters;
  spec.degree = cfg.degree;
  spec.df = cfg.df;
  spec.separation = cfg.sim_separation;
  if (cfg.sim_tau > 0.0) spec.true_tau = cfg.sim_tau;
  spec.seed = cfg.master_seed;
  const Simulated sim = simulate(spec, regular_grid(cfg.sim_times, cfg.sim_replicates), cfg.priors);
  save_csv(paths.data, sim.data);
  nlohmann::json t;
  t["true_labels"] = sim.truth.true_labels;
  t["true_tau"] = sim.truth.true_tau;
  t["true_pi"] = std::vector<double>(sim.truth.true_pi.data(), sim.truth.true_pi.data() + sim.truth.true_pi.size());
  t["true_offsets"] = std::vector<double>(sim.truth.true_offsets.data(),
                                          sim.truth.true_offsets.data() + sim.truth.true_offsets.size());
  std::vector<std::vector<double>> beta(static_cast<std::size_t>(sim.truth.true_beta.rows()));
  for (Eigen::Index k = 0; k < sim.truth.true_beta.rows(); ++k)
    for (Eigen::Index i = 0; i < sim.truth.true_beta.cols(); ++i) beta[k].push_back(sim.truth.true_beta(k, i));
  t["true_beta"] = beta;
  std::ofstream out(paths.truth);
  if (!out) throw DataError("cannot write '" + paths.truth + "'");
  out << t.dump(1) << '\n';
  std::cout << "wrote " << paths.data << " (" << cfg.sim_genes << " genes, " << sim.data.n_obs()
            << " observations) and " << paths.truth << '\n';
  return kOk;
}

int cmd_fit(const RunConfig& cfg, const Paths& paths) {
  const Model model = load_model(cfg, paths);
  FitArchive a;
  a.priors = cfg.priors;
  a.config = cfg.fit_json();
  a.config_digest = config_digest(a.config);
  a.data_digest = dataset_digest(model.data());
  std::vector<FitResult> runs;
  int status = kOk;
  FitResult best;
  try {
    best = multi_restart(model, unit_weights(model.n_genes()), cfg.n_restarts, cfg.master_seed, cfg.schedule,
                         Execution::parallel, &runs);
  } catch (const NumericalError& e) {
    std::cerr << e.what() << '\n';
    status = kNumerical;
    // Keep the lowest finite KL so the failure can be inspected downstream.
    const FitResult* pick = nullptr;
    for (const FitResult& r : runs)
      if (r.eta_star.size() == model.dim() && std::isfinite(r.kl_value) && (pick == nullptr || r.kl_value < pick->kl_value))
        pick = &r;
    if (pick == nullptr) return kNumerical;
    best = *pick;
  }
  a.eta_star = best.eta_star;
  a.kl_value = best.kl_value;
  a.grad_norm = best.grad_norm;
  a.converged = best.converged;
  double total = 0.0;
  for (const FitResult& r : runs) total += r.wall_time;
  a.fit_seconds = total;
  save_archive(paths.fit, a);
  std::cout << "fit: kl=" << format_double(a.kl_value) << " grad_norm=" << a.grad_norm
            << " converged=" << (a.converged ? "yes" : "no") << " restarts=" << runs.size()
            << " restart_seconds_total=" << total << " -> " << paths.fit << '\n';
  return status;
}

int cmd_sensitivity(const RunConfig& cfg, const Paths& paths) {
  const Model model = load_model(cfg, paths);
  FitArchive a = load_matching_archive(cfg, paths, model);
  if (!a.converged)
    throw NumericalError("not a strict local minimum: the base fit in '" + paths.fit +
                         "' did not converge (gradient norm " + format_double(a.grad_norm) + ")");
  const MixtureObjective obj(model);
  const SensitivityMatrix sens = compute_S(obj, a.eta_star);
  a.S = sens.S;
  a.S_seconds = sens.wall_time;
  save_archive(paths.fit, a);
  std::cout << "sensitivity: " << sens.S.rows() << " x " << sens.S.cols() << " in " << sens.wall_time
            << " s, residual " << sens.residual << " -> " << paths.fit << '\n';
  return kOk;
}

std::vector<GenePair> pair_subset(const RunConfig& cfg, Eigen::Index n_genes) {
  std::vector<int> genes;
  for (int g = 0; g < std::min<Eigen::Index>(cfg.pair_genes, n_genes); ++g) genes.push_back(g);
  return all_pairs(genes);
}

int cmd_bootstrap(const RunConfig& cfg, const Paths& paths) {
  const Model model = load_model(cfg, paths);
  const FitArchive a = load_matching_archive(cfg, paths, model);
  if (!a.converged) throw NumericalError("base fit in '" + paths.fit + "' did not converge; refit first");
  BootstrapConfig bc;
  bc.n_boot = cfg.n_boot;
  bc.modes = cfg.parsed_modes();
  bc.master_seed = cfg.master_seed;
  bc.cold_restarts = cfg.cold_restarts;
  bc.schedule = cfg.schedule;
  bc.linear_kl = cfg.linear_kl;
  bc.pairs = pair_subset(cfg, model.n_genes());
  bc.exec = cfg.workers == 1 ? Execution::serial : Execution::parallel;

  std::optional<SensitivityMatrix> sens;
  if (std::find(bc.modes.begin(), bc.modes.end(), Mode::linear) != bc.modes.end()) {
    if (!a.S) throw DataError("fit archive '" + paths.fit + "' has no sensitivity matrix; run `linboot sensitivity` first");
    sens = SensitivityMatrix{*a.S, a.eta_star, 0.0, 0.0, a.S_seconds};
  }
  const BaseFit base = make_base(a.eta_star, model);
  const BootstrapRun run = run_bootstrap(bc, base, sens ? &*sens : nullptr, model);
  write_replicate_table(paths.replicates, run.replicates);
  write_cocluster_table(paths.cocluster, run.replicates, bc.pairs);
  for (const auto& [mode, s] : run.summary)
    std::cout << to_string(mode) << ": ok=" << s.n_ok << " failed=" << s.n_failed
              << " median_seconds=" << s.median_seconds << " fm_median=" << s.fm_median
              << " nmi_median=" << s.nmi_median << '\n';
  if (!run.failures.empty()) {
    std::cerr << run.failures.size() << " replicate(s) excluded:\n";
    for (const std::string& f : run.failures) std::cerr << "  " << f << '\n';
  }
  std::cout << "wrote " << paths.replicates << " and " << paths.cocluster << '\n';
  return kOk;
}

std::string metric_table(const std::vector<ReplicateResult>& rows) {
  std::ostringstream o;
  o << "mode,n_ok,n_failed,fm_median,fm_q05,fm_q95,nmi_median,nmi_q05,nmi_q95\n";
  for (const auto& [mode, s] : summarize(rows))
    o << to_string(mode) << ',' << s.n_ok << ',' << s.n_failed << ',' << format_double(s.fm_median) << ','
      << format_double(s.fm_q05) << ',' << format_double(s.fm_q95) << ',' << format_double(s.nmi_median) << ','
      << format_double(s.nmi_q05) << ',' << format_double(s.nmi_q95) << '\n';
  return o.str();
}

std::string cocluster_table(const std::vector<CoclusterRow>& rows, const std::vector<ReplicateResult>& reps,
                            double threshold) {
  std::map<std::pair<int, int>, bool> ok;
  for (const ReplicateResult& r : reps) ok[{r.replicate_index, static_cast<int>(r.mode)}] = r.converged;
  std::map<Mode, std::map<GenePair, std::vector<double>>> probs;
  for (const CoclusterRow& c : rows)
    if (ok[{c.replicate, static_cast<int>(c.mode)}]) probs[c.mode][{c.g1, c.g2}].push_back(c.prob);

  std::vector<Mode> modes;
  for (const auto& [m, unused] : probs) modes.push_back(m);
  std::map<GenePair, std::map<Mode, double>> sd;
  for (const auto& [m, by_pair] : probs) {
    std::vector<std::vector<double>> per_rep;
    std::vector<GenePair> pairs;
    for (const auto& [p, v] : by_pair) pairs.push_back(p);
    const std::size_t n_rep = by_pair.begin()->second.size();
    if (n_rep < 2) continue;
    for (std::size_t r = 0; r < n_rep; ++r) {
      std::vector<double> row;
      for (const auto& [p, v] : by_pair) row.push_back(v[r]);
      per_rep.push_back(std::move(row));
    }
    const std::vector<double> s = cocluster_sd_from_probs(per_rep);
    for (std::size_t i = 0; i < pairs.size(); ++i) sd[pairs[i]][m] = s[i];
  }
  std::ostringstream o;
  o << "g1,g2";
  for (Mode m : modes) o << ",sd_" << to_string(m);
  o << '\n';
  for (const auto& [p, by_mode] : sd) {
    double mx = 0.0;
    for (const auto& [m, v] : by_mode) mx = std::max(mx, v);
    if (mx <= threshold) continue;
    o << p.first << ',' << p.second;
    for (Mode m : modes) {
      const auto it = by_mode.find(m);
      o << ',' << format_double(it == by_mode.end() ? std::nan("") : it->second);
    }
    o << '\n';
  }
  return o.str();
}

std::string timing_table(const std::vector<ReplicateResult>& rows, double s_seconds) {
  const auto summary = summarize(rows);
  auto med = [&](Mode m) {
    const auto it = summary.find(m);
    return it == summary.end() || it->second.n_ok == 0 ? std::nan("") : it->second.median_seconds;
  };
  std::ostringstream o;
  o << "cold,warm,linear,S\n"
    << format_double(med(Mode::cold)) << ',' << format_double(med(Mode::warm)) << ','
    << format_double(med(Mode::linear)) << ',' << format_double(s_seconds) << '\n';
  return o.str();
}

std::string kl_table(const std::vector<ReplicateResult>& rows) {
  std::map<int, std::map<Mode, double>> kl;
  for (const ReplicateResult& r : rows)
    if (r.converged && !std::isnan(r.kl_value)) kl[r.replicate_index][r.mode] = r.kl_value;
  std::ostringstream o;
  o << "replicate,kl_linear,kl_warm,kl_cold,linear_minus_warm\n";
  for (const auto& [b, m] : kl) {
    auto get = [&](Mode md) {
      const auto it = m.find(md);
      return it == m.end() ? std::nan("") : it->second;
    };
    o << b << ',' << format_double(get(Mode::linear)) << ',' << format_double(get(Mode::warm)) << ','
      << format_double(get(Mode::cold)) << ',' << format_double(get(Mode::linear) - get(Mode::warm)) << '\n';
  }
  return o.str();
}

int cmd_metrics(const RunConfig& cfg, const Paths& paths) {
  require_file(paths.replicates, "replicate table", "bootstrap");
  const auto reps = read_replicate_table(paths.replicates);
  emit(paths.out_dir, "metric_summary.csv", "clustering similarity to the base fit", metric_table(reps));
  if (fs::exists(paths.cocluster))
    emit(paths.out_dir, "cocluster_sd.csv", "co-clustering SD above threshold",
         cocluster_table(read_cocluster_table(paths.cocluster), reps, cfg.sd_threshold));
  return kOk;
}

int cmd_report(const RunConfig& cfg, const Paths& paths) {
  require_file(paths.replicates, "replicate table", "bootstrap");
  const auto reps = read_replicate_table(paths.replicates);
  double s_seconds = std::nan("");
  if (fs::exists(paths.fit)) {
    const FitArchive a = load_archive(paths.fit);
    if (a.S) s_seconds = a.S_seconds;
  }
  emit(paths.out_dir, "median_times.csv", "median seconds per bootstrap replicate", timing_table(reps, s_seconds));
  cmd_metrics(cfg, paths);
  bool any_linear_kl = false;
  for (const ReplicateResult& r : reps) any_linear_kl |= r.mode == Mode::linear && !std::isnan(r.kl_value);
  if (any_linear_kl) emit(paths.out_dir, "kl_comparison.csv", "weighted KL per replicate", kl_table(reps));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spline mixture clustering with linear, warm and cold bootstrap stability estimates"};
  app.set_config("--config", "", "TOML/INI file with any of the options below");
  app.require_subcommand(1);

  RunConfig cfg;
  Paths paths;
  std::string weighting = "likelihood";
  std::string modes = "linear,warm,cold";

  auto& c = cfg;
  app.add_option("--K", c.K, describe("K"));
  app.add_option("--degree", c.degree, describe("degree"));
  app.add_option("--df", c.df, describe("df"));
  app.add_option("--alpha", c.priors.alpha, describe("alpha"));
  app.add_option("--beta-mean", c.priors.beta_mean, describe("beta_mean"));
  app.add_option("--beta-var", c.priors.beta_var, describe("beta_var"));
  app.add_option("--b-mean", c.priors.b_mean, describe("b_mean"));
  app.add_option("--b-var", c.priors.b_var, describe("b_var"));
  app.add_option("--tau-shape", c.priors.tau_shape, describe("tau_shape"));
  app.add_option("--tau-scale", c.priors.tau_scale, describe("tau_scale"));
  app.add_option("--bfgs-iters", c.schedule.bfgs_iters, describe("bfgs_iters"));
  app.add_option("--newton-max-iters", c.schedule.newton_max_iters, describe("newton_max_iters"));
  app.add_option("--grad-tol", c.schedule.grad_tol, describe("grad_tol"));
  app.add_option("--precond-refresh", c.schedule.precond_refresh, describe("precond_refresh"));
  app.add_option("--weighting", weighting, describe("weighting"));
  app.add_option("--n-restarts", c.n_restarts, describe("n_restarts"));
  app.add_option("--cold-restarts", c.cold_restarts, describe("cold_restarts"));
  app.add_option("--n-boot", c.n_boot, describe("n_boot"));
  app.add_option("--modes", modes, describe("modes"));
  app.add_option("--master-seed", c.master_seed, describe("master_seed"));
  app.add_option("--pair-genes", c.pair_genes, describe("pair_genes"));
  app.add_option("--sd-threshold", c.sd_threshold, describe("sd_threshold"));
  app.add_flag("--linear-kl", c.linear_kl, describe("linear_kl"));
  app.add_option("--workers", c.workers, describe("workers"))->envname("LINBOOT_WORKERS");
  app.add_option("--sim-genes", c.sim_genes, describe("sim_genes"));
  app.add_option("--sim-clusters", c.sim_clusters, describe("sim_clusters"));
  app.add_option("--sim-times", c.sim_times, describe("sim_times"));
  app.add_option("--sim-replicates", c.sim_replicates, describe("sim_replicates"));
  app.add_option("--sim-separation", c.sim_separation, describe("sim_separation"));
  app.add_option("--sim-tau", c.sim_tau, describe("sim_tau"));

  app.add_option("--data", paths.data, "long-format CSV dataset")->capture_default_str();
  app.add_option("--truth", paths.truth, "simulation truth (JSON)")->capture_default_str();
  app.add_option("--fit", paths.fit, "fit archive (JSON)")->capture_default_str();
  app.add_option("--replicates", paths.replicates, "replicate table (CSV)")->capture_default_str();
  app.add_option("--cocluster", paths.cocluster, "per-replicate co-clustering table (CSV)")->capture_default_str();
  app.add_option("--out-dir", paths.out_dir, "directory for report tables")->capture_default_str();

  std::map<std::string, int (*)(const RunConfig&, const Paths&)> commands = {
      {"simulate", cmd_simulate}, {"fit", cmd_fit},         {"sensitivity", cmd_sensitivity},
      {"bootstrap", cmd_bootstrap}, {"metrics", cmd_metrics}, {"report", cmd_report}};
  const std::map<std::string, std::string> blurbs = {
      {"simulate", "draw a synthetic dataset from the generative model"},
      {"fit", "multi-restart fit; writes the fit archive"},
      {"sensitivity", "weight-sensitivity matrix; stored in the fit archive"},
      {"bootstrap", "run bootstrap replicates; writes replicate and co-clustering tables"},
      {"metrics", "similarity distributions and co-clustering SD table"},
      {"report", "median-time table, metric tables and KL comparison"}};
  for (const auto& [name, fn] : commands) app.add_subcommand(name, blurbs.at(name))->fallthrough();

  try {
    app.parse(argc, argv);
    cfg.weighting = parse_weighting(weighting);
    cfg.modes.clear();
    std::stringstream ms(modes);
    for (std::string m; std::getline(ms, m, ',');)
      if (!m.empty()) cfg.modes.push_back(m);
    cfg.validate();
    for (std::string* p : {&paths.data, &paths.truth, &paths.fit, &paths.replicates, &paths.cocluster, &paths.out_dir})
      *p = scratch_path(*p);
    set_worker_count(cfg.workers);
    const std::string name = app.get_subcommands().front()->get_name();
    return commands.at(name)(cfg, paths);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}
