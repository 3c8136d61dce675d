#include "linboot/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/random/beta_distribution.hpp>
#include <boost/random/discrete_distribution.hpp>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include "linboot/errors.hpp"
#include "linboot/optimizer.hpp"

namespace linboot {

using Eigen::Index;
using nlohmann::json;

std::string format_double(double x) {
  if (std::isnan(x)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

double parse_double(const std::string& s, const std::string& what) {
  if (s == "NA") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw DataError(what + ": '" + s + "' is not a number");
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

void expect_header(std::ifstream& in, const std::string& path, const std::string& header) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != header)
    throw DataError("'" + path + "': expected header '" + header + "'");
}

}  // namespace

TimeGrid regular_grid(int n_times, int n_replicates) {
  TimeGrid grid;
  for (int t = 0; t < n_times; ++t)
    for (int r = 0; r < n_replicates; ++r) grid.obs_times.push_back(static_cast<double>(t));
  return grid;
}

Simulated simulate(const SimulationSpec& spec, const TimeGrid& grid, const Priors& priors) {
  if (spec.n_genes < 1 || spec.K_true < 1) throw UsageError("simulate: need at least one gene and one cluster");
  priors.validate();
  const double tau = spec.true_tau.value_or(priors.tau_shape * priors.tau_scale);
  if (!(tau > 0.0)) throw UsageError("simulate: true noise precision must be positive");

  Simulated out;
  Dataset& d = out.data;
  d.grid = grid;
  d.basis = make_basis(spec.degree, spec.df, grid);

  boost::random::mt19937_64 rng(spec.seed);
  boost::random::normal_distribution<double> std_normal(0.0, 1.0);

  std::vector<double> nu(static_cast<std::size_t>(spec.K_true), 1.0);
  boost::random::beta_distribution<double> stick(1.0, priors.alpha);
  for (int k = 0; k + 1 < spec.K_true; ++k) nu[k] = stick(rng);
  const Eigen::VectorXd pi = stick_proportions(nu);

  const double sigma = 1.0 / std::sqrt(tau);
  SimulationTruth& truth = out.truth;
  truth.true_pi = pi;
  truth.true_tau = tau;
  truth.true_beta.resize(spec.K_true, spec.df);
  for (int k = 0; k < spec.K_true; ++k)
    for (int i = 0; i < spec.df; ++i)
      truth.true_beta(k, i) = priors.beta_mean + spec.separation * sigma * std_normal(rng);

  boost::random::discrete_distribution<int, double> label(pi.data(), pi.data() + pi.size());
  const Index n_obs = static_cast<Index>(grid.n_obs());
  d.y.resize(spec.n_genes, n_obs);
  truth.true_offsets.resize(spec.n_genes);
  const Eigen::MatrixXd means = truth.true_beta * d.basis.X.transpose();  // K_true x n_obs
  for (int g = 0; g < spec.n_genes; ++g) {
    const int z = label(rng);
    truth.true_labels.push_back(z + 1);
    const double b = priors.b_mean + std::sqrt(priors.b_var) * std_normal(rng);
    truth.true_offsets[g] = b;
    for (Index t = 0; t < n_obs; ++t) d.y(g, t) = means(z, t) + b + sigma * std_normal(rng);
    d.gene_ids.push_back("g" + std::to_string(g + 1));
  }
  return out;
}

Dataset load_csv(const std::string& path, int degree, int df) {
  std::ifstream in = open_in(path);
  expect_header(in, path, "gene_id,time,replicate,expression");

  using Key = std::pair<double, std::string>;  // (time, replicate)
  // Integer replicate labels sort numerically, anything else lexically after them.
  auto key_less = [](const Key& a, const Key& b) {
    if (a.first != b.first) return a.first < b.first;
    auto as_int = [](const std::string& s) -> std::optional<long> {
      if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) return {};
      return std::stol(s);
    };
    const auto ia = as_int(a.second);
    const auto ib = as_int(b.second);
    if (ia && ib && *ia != *ib) return *ia < *ib;
    if (ia.has_value() != ib.has_value()) return ia.has_value();
    return a.second < b.second;
  };
  std::vector<std::string> genes;
  std::map<std::string, std::size_t> gene_index;
  std::map<Key, std::size_t, decltype(key_less)> obs_index(key_less);
  std::map<std::pair<std::size_t, std::size_t>, double> cells;
  std::vector<Key> keys_seen;

  std::string line;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const std::vector<std::string> f = split(line);
    const std::string where = "'" + path + "' row " + std::to_string(row);
    if (f.size() != 4) throw DataError(where + ": expected 4 fields, found " + std::to_string(f.size()));
    if (f[0].empty()) throw DataError(where + ": empty gene_id");
    const double t = parse_double(f[1], where + " time");
    const double v = parse_double(f[3], where + " expression");
    if (!std::isfinite(t)) throw DataError(where + ": time is not finite");
    if (!std::isfinite(v)) throw DataError(where + ": expression is missing or not finite");
    auto [git, inserted] = gene_index.emplace(f[0], genes.size());
    if (inserted) genes.push_back(f[0]);
    const Key key{t, f[2]};
    auto [oit, new_obs] = obs_index.emplace(key, keys_seen.size());
    if (new_obs) keys_seen.push_back(key);
    if (!cells.emplace(std::make_pair(git->second, oit->second), v).second)
      throw DataError(where + ": duplicate key (gene " + f[0] + ", time " + f[1] + ", replicate " + f[2] + ")");
  }
  if (genes.empty()) throw DataError("'" + path + "': no data rows");

  Dataset d;
  std::vector<std::size_t> column(keys_seen.size());
  std::size_t col = 0;
  for (auto& [key, idx] : obs_index) {
    column[idx] = col++;
    d.grid.obs_times.push_back(key.first);
  }
  d.y = Eigen::MatrixXd::Constant(static_cast<Index>(genes.size()), static_cast<Index>(obs_index.size()),
                                  std::numeric_limits<double>::quiet_NaN());
  for (const auto& [k, v] : cells) d.y(static_cast<Index>(k.first), static_cast<Index>(column[k.second])) = v;

  std::ostringstream missing;
  int n_missing = 0;
  for (Index g = 0; g < d.y.rows(); ++g)
    for (const auto& [key, idx] : obs_index)
      if (std::isnan(d.y(g, static_cast<Index>(column[idx])))) {
        if (n_missing < 20) missing << "\n  gene " << genes[g] << " time " << format_double(key.first) << " replicate " << key.second;
        ++n_missing;
      }
  if (n_missing > 0)
    throw DataError("'" + path + "': " + std::to_string(n_missing) + " missing cells" + missing.str());

  d.gene_ids = std::move(genes);
  d.basis = make_basis(degree, df, d.grid);
  d.validate();
  return d;
}

void save_csv(const std::string& path, const Dataset& data) {
  std::ofstream out = open_out(path);
  out << "gene_id,time,replicate,expression\n";
  std::vector<int> rep(data.grid.n_obs(), 1);
  for (std::size_t j = 1; j < rep.size(); ++j)
    if (data.grid.obs_times[j] == data.grid.obs_times[j - 1]) rep[j] = rep[j - 1] + 1;
  for (Index g = 0; g < data.n_genes(); ++g)
    for (Index j = 0; j < data.n_obs(); ++j)
      out << data.gene_ids[g] << ',' << format_double(data.grid.obs_times[j]) << ',' << rep[j] << ','
          << format_double(data.y(g, j)) << '\n';
  if (!out) throw DataError("write to '" + path + "' failed");
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t dataset_digest(const Dataset& data) {
  std::string bytes;
  auto put = [&](double x) {
    char b[sizeof(double)];
    std::memcpy(b, &x, sizeof x);
    bytes.append(b, sizeof b);
  };
  put(static_cast<double>(data.n_genes()));
  put(static_cast<double>(data.n_obs()));
  for (double t : data.grid.obs_times) put(t);
  for (Index g = 0; g < data.n_genes(); ++g)
    for (Index j = 0; j < data.n_obs(); ++j) put(data.y(g, j));
  return fnv1a(bytes);
}

std::uint64_t config_digest(const json& config) { return fnv1a(config.dump()); }

namespace {

json priors_json(const Priors& p) {
  return {{"alpha", p.alpha},     {"beta_mean", p.beta_mean}, {"beta_var", p.beta_var}, {"b_mean", p.b_mean},
          {"b_var", p.b_var},     {"tau_shape", p.tau_shape}, {"tau_scale", p.tau_scale}};
}

Priors priors_from(const json& j) {
  Priors p;
  p.alpha = j.at("alpha").get<double>();
  p.beta_mean = j.at("beta_mean").get<double>();
  p.beta_var = j.at("beta_var").get<double>();
  p.b_mean = j.at("b_mean").get<double>();
  p.b_var = j.at("b_var").get<double>();
  p.tau_shape = j.at("tau_shape").get<double>();
  p.tau_scale = j.at("tau_scale").get<double>();
  return p;
}

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void save_archive(const std::string& path, const FitArchive& a) {
  json j;
  j["format_version"] = a.format_version;
  j["priors"] = priors_json(a.priors);
  j["config"] = a.config;
  j["config_digest"] = hex(a.config_digest);
  j["data_digest"] = hex(a.data_digest);
  j["eta_star"] = std::vector<double>(a.eta_star.data(), a.eta_star.data() + a.eta_star.size());
  j["kl_value"] = a.kl_value;
  j["grad_norm"] = a.grad_norm;
  j["converged"] = a.converged;
  j["fit_seconds"] = a.fit_seconds;
  if (a.S) {
    const Eigen::MatrixXd& S = *a.S;
    j["S"] = {{"rows", S.rows()}, {"cols", S.cols()},
              {"col_major", std::vector<double>(S.data(), S.data() + S.size())}};
    j["S_seconds"] = a.S_seconds;
  }
  std::ofstream out = open_out(path);
  out << j.dump(1) << '\n';
  if (!out) throw DataError("write to '" + path + "' failed");
}

FitArchive load_archive(const std::string& path) {
  std::ifstream in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("'" + path + "' is not a valid archive: " + e.what());
  }
  FitArchive a;
  try {
    a.format_version = j.at("format_version").get<int>();
    if (a.format_version != kArchiveVersion)
      throw DataError("'" + path + "' has archive format version " + std::to_string(a.format_version) +
                      ", this build reads version " + std::to_string(kArchiveVersion));
    a.priors = priors_from(j.at("priors"));
    a.config = j.at("config");
    a.config_digest = std::stoull(j.at("config_digest").get<std::string>(), nullptr, 16);
    a.data_digest = std::stoull(j.at("data_digest").get<std::string>(), nullptr, 16);
    const auto eta = j.at("eta_star").get<std::vector<double>>();
    a.eta_star = Eigen::Map<const Eigen::VectorXd>(eta.data(), static_cast<Index>(eta.size()));
    a.kl_value = j.at("kl_value").get<double>();
    a.grad_norm = j.at("grad_norm").get<double>();
    a.converged = j.at("converged").get<bool>();
    a.fit_seconds = j.at("fit_seconds").get<double>();
    if (j.contains("S")) {
      const auto& s = j["S"];
      const auto vals = s.at("col_major").get<std::vector<double>>();
      const Index r = s.at("rows").get<Index>();
      const Index c = s.at("cols").get<Index>();
      if (static_cast<Index>(vals.size()) != r * c) throw DataError("'" + path + "': S has the wrong size");
      a.S = Eigen::Map<const Eigen::MatrixXd>(vals.data(), r, c);
      a.S_seconds = j.at("S_seconds").get<double>();
    }
  } catch (const json::exception& e) {
    throw DataError("'" + path + "' is missing archive fields: " + e.what());
  }
  if (config_digest(a.config) != a.config_digest)
    throw DataError("'" + path + "': config digest does not match the stored config (archive modified?)");
  return a;
}

void write_replicate_table(const std::string& path, const std::vector<ReplicateResult>& rows) {
  std::ofstream out = open_out(path);
  out << "replicate,mode,fm,nmi,kl,seconds,weights_seed,converged\n";
  for (const ReplicateResult& r : rows)
    out << r.replicate_index << ',' << to_string(r.mode) << ',' << format_double(r.fm) << ','
        << format_double(r.nmi) << ',' << format_double(r.kl_value) << ',' << format_double(r.wall_time_seconds)
        << ',' << r.weights_seed << ',' << (r.converged ? 1 : 0) << '\n';
  if (!out) throw DataError("write to '" + path + "' failed");
}

std::vector<ReplicateResult> read_replicate_table(const std::string& path) {
  std::ifstream in = open_in(path);
  expect_header(in, path, "replicate,mode,fm,nmi,kl,seconds,weights_seed,converged");
  std::vector<ReplicateResult> rows;
  std::string line;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    const auto f = split(line);
    const std::string where = "'" + path + "' row " + std::to_string(n);
    if (f.size() != 8) throw DataError(where + ": expected 8 fields");
    ReplicateResult r;
    try {
      r.replicate_index = std::stoi(f[0]);
      r.mode = parse_mode(f[1]);
      r.weights_seed = std::stoull(f[6]);
    } catch (const std::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    r.fm = parse_double(f[2], where + " fm");
    r.nmi = parse_double(f[3], where + " nmi");
    r.kl_value = parse_double(f[4], where + " kl");
    r.wall_time_seconds = parse_double(f[5], where + " seconds");
    r.converged = f[7] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_cocluster_table(const std::string& path, const std::vector<ReplicateResult>& rows,
                           const std::vector<GenePair>& pairs) {
  std::ofstream out = open_out(path);
  out << "replicate,mode,g1,g2,prob\n";
  for (const ReplicateResult& r : rows) {
    if (r.cocluster.size() != pairs.size()) continue;
    for (std::size_t p = 0; p < pairs.size(); ++p)
      out << r.replicate_index << ',' << to_string(r.mode) << ',' << pairs[p].first << ',' << pairs[p].second << ','
          << format_double(r.cocluster[p]) << '\n';
  }
  if (!out) throw DataError("write to '" + path + "' failed");
}

std::vector<CoclusterRow> read_cocluster_table(const std::string& path) {
  std::ifstream in = open_in(path);
  expect_header(in, path, "replicate,mode,g1,g2,prob");
  std::vector<CoclusterRow> rows;
  std::string line;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    const auto f = split(line);
    const std::string where = "'" + path + "' row " + std::to_string(n);
    if (f.size() != 5) throw DataError(where + ": expected 5 fields");
    CoclusterRow r;
    try {
      r.replicate = std::stoi(f[0]);
      r.mode = parse_mode(f[1]);
      r.g1 = std::stoi(f[2]);
      r.g2 = std::stoi(f[3]);
    } catch (const std::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    r.prob = parse_double(f[4], where + " prob");
    rows.push_back(r);
  }
  return rows;
}

}  // namespace linboot
