#include "privmtl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "privmtl/privacy.hpp"
#include "privmtl/solvers.hpp"

namespace privmtl {
namespace {

namespace fs = std::filesystem;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad number '" + v + "'");
  }
}

long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long x = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad integer '" + v + "'");
  }
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct SeedRun {
  double final_val_acc = 0.0;
  double test_acc = 0.0;
};

struct GridCell {
  double gamma, sigma;
  int T;
  double certified_eps = 0.0;
  std::vector<SeedRun> runs;

  double mean_val() const {
    double s = 0.0;
    for (const auto& r : runs) s += r.final_val_acc;
    return s / runs.size();
  }
  double mean_test() const {
    double s = 0.0;
    for (const auto& r : runs) s += r.test_acc;
    return s / runs.size();
  }
  double std_test() const {
    const double mu = mean_test();
    double s = 0.0;
    for (const auto& r : runs) s += (r.test_acc - mu) * (r.test_acc - mu);
    return std::sqrt(s / runs.size());
  }
};

double certify_grid_point(const ExperimentConfig& config, SolverKind solver,
                          double gamma, double sigma, int T) {
  if (solver == SolverKind::kLocalOnly) return 0.0;
  PrivacyLedger ledger;
  ledger.delta = config.federation.effective_delta();
  ledger.convention = config.federation.sensitivity_convention;
  const int m = config.federation.m;
  const int q = config.federation.q;
  for (int t = 0; t < T; ++t) {
    if (solver == SolverKind::kNaiveDpMtl)
      ledger.record(sigma / gamma, 1.0);
    else
      ledger.record(q * sigma / gamma, static_cast<double>(q) / m);
  }
  return epsilon_for_sigma(ledger);
}

SolverOutput dispatch(const ExperimentConfig& config, SolverKind solver,
                      const FederationConfig& fed,
                      const std::vector<TaskDataset>& train,
                      const std::vector<TaskDataset>* val) {
  const double mu =
      config.mu_prox >= 0.0 ? config.mu_prox : config.federation.lambda;
  switch (solver) {
    case SolverKind::kPrivateMtl:
      return run_private_mtl(fed, train, config.model, val);
    case SolverKind::kFedAvg:
      return run_fedavg_global(fed, train, config.model, fed.sigma > 0.0, val);
    case SolverKind::kFedProx:
      return run_fedprox(fed, train, config.model, mu, fed.sigma > 0.0, val);
    case SolverKind::kNaiveDpMtl:
      return run_naive_dp_mtl(fed, train, config.model, val);
    case SolverKind::kLocalOnly: {
      FederationConfig local = fed;
      local.lambda = 0.0;
      local.sigma = 0.0;
      return run_private_mtl(local, train, config.model, val);
    }
  }
  throw ConfigError("unknown solver");
}

std::string trace_file_name(SolverKind solver, double gamma, double sigma,
                            int T, std::uint64_t seed) {
  return "trace_" + to_string(solver) + "_g" + format_double(gamma) + "_s" +
         format_double(sigma) + "_T" + std::to_string(T) + "_seed" +
         std::to_string(seed) + ".csv";
}

}  // namespace

KeyValueConfig parse_config_text(const std::string& text) {
  KeyValueConfig kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) +
                                       ": empty key");
    kv[key] = value;
  }
  return kv;
}

KeyValueConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

SolverKind solver_from_string(const std::string& s) {
  if (s == "private_mtl") return SolverKind::kPrivateMtl;
  if (s == "fedavg") return SolverKind::kFedAvg;
  if (s == "fedprox") return SolverKind::kFedProx;
  if (s == "naive_dp_mtl") return SolverKind::kNaiveDpMtl;
  if (s == "local_only") return SolverKind::kLocalOnly;
  throw ConfigError("unknown solver: " + s);
}

std::string to_string(SolverKind s) {
  switch (s) {
    case SolverKind::kPrivateMtl: return "private_mtl";
    case SolverKind::kFedAvg: return "fedavg";
    case SolverKind::kFedProx: return "fedprox";
    case SolverKind::kNaiveDpMtl: return "naive_dp_mtl";
    case SolverKind::kLocalOnly: return "local_only";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  federation.validate();
  if (data_dir.empty()) synthetic.validate();
  if (gamma_grid.empty() || sigma_grid.empty() || t_grid.empty())
    throw ConfigError("sweep grids must be nonempty");
  if (epsilon_grid.empty()) throw ConfigError("epsilon grid must be nonempty");
  for (double e : epsilon_grid)
    if (e <= 0.0) throw ConfigError("epsilon grid values must be positive");
  if (seeds.empty()) throw ConfigError("need at least one seed");
  if (solvers.empty()) throw ConfigError("need at least one solver");
}

ExperimentConfig experiment_from_kv(const KeyValueConfig& kv) {
  ExperimentConfig c;
  for (const auto& [key, v] : kv) {
    if (key == "federation.m") c.federation.m = static_cast<int>(to_long(key, v));
    else if (key == "federation.q") c.federation.q = static_cast<int>(to_long(key, v));
    else if (key == "federation.t") c.federation.T = static_cast<int>(to_long(key, v));
    else if (key == "federation.e") c.federation.E = static_cast<int>(to_long(key, v));
    else if (key == "federation.lambda") c.federation.lambda = to_double(key, v);
    else if (key == "federation.eta") c.federation.eta = to_double(key, v);
    else if (key == "federation.gamma") c.federation.gamma = to_double(key, v);
    else if (key == "federation.sigma") c.federation.sigma = to_double(key, v);
    else if (key == "federation.delta") c.federation.delta = to_double(key, v);
    else if (key == "federation.epsilon_target")
      c.federation.epsilon_target = to_double(key, v);
    else if (key == "federation.seed")
      c.federation.seed = static_cast<std::uint64_t>(to_long(key, v));
    else if (key == "federation.batch_size")
      c.federation.batch_size = v == "full" ? 0 : static_cast<int>(to_long(key, v));
    else if (key == "federation.identical_init")
      c.federation.identical_init = v == "true" || v == "1";
    else if (key == "federation.sensitivity_convention") {
      if (v == "paper") c.federation.sensitivity_convention = SensitivityConvention::kPaper;
      else if (v == "conservative")
        c.federation.sensitivity_convention = SensitivityConvention::kConservative;
      else throw ConfigError("sensitivity_convention must be paper or conservative");
    } else if (key == "model.family")
      c.model.family = model_family_from_string(v);
    else if (key == "model.hidden_width")
      c.model.hidden_width = static_cast<int>(to_long(key, v));
    else if (key == "synthetic.n_k")
      c.synthetic.n_k = static_cast<int>(to_long(key, v));
    else if (key == "synthetic.feature_dim")
      c.synthetic.feature_dim = static_cast<int>(to_long(key, v));
    else if (key == "synthetic.heterogeneity")
      c.synthetic.heterogeneity = to_double(key, v);
    else if (key == "synthetic.label_noise")
      c.synthetic.label_noise = to_double(key, v);
    else if (key == "data.dir") c.data_dir = v;
    else if (key == "output.dir") c.output_dir = v;
    else if (key == "fedprox.mu") c.mu_prox = to_double(key, v);
    else if (key == "solvers") {
      c.solvers.clear();
      for (const auto& s : split_list(v)) c.solvers.push_back(solver_from_string(s));
    } else if (key == "sweep.gamma_grid") {
      c.gamma_grid.clear();
      for (const auto& s : split_list(v)) c.gamma_grid.push_back(to_double(key, s));
    } else if (key == "sweep.sigma_grid") {
      c.sigma_grid.clear();
      for (const auto& s : split_list(v)) c.sigma_grid.push_back(to_double(key, s));
    } else if (key == "sweep.t_grid") {
      c.t_grid.clear();
      for (const auto& s : split_list(v))
        c.t_grid.push_back(static_cast<int>(to_long(key, s)));
    } else if (key == "sweep.epsilon_grid") {
      c.epsilon_grid.clear();
      for (const auto& s : split_list(v)) c.epsilon_grid.push_back(to_double(key, s));
    } else if (key == "sweep.seeds") {
      c.seeds.clear();
      for (const auto& s : split_list(v))
        c.seeds.push_back(static_cast<std::uint64_t>(to_long(key, s)));
    } else {
      throw ConfigError("unknown config key: " + key);
    }
  }
  c.synthetic.m = c.federation.m;
  c.model.feature_width = c.synthetic.feature_dim;
  return c;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  ExperimentConfig cfg = config;
  if (const char* env = std::getenv("PRIVMTL_OUTPUT_DIR"); env && *env)
    cfg.output_dir = env;
  cfg.validate();
  fs::create_directories(cfg.output_dir);

  // Per-seed federations, generated (or loaded) once.
  std::vector<SplitFederation> federations;
  for (std::uint64_t seed : cfg.seeds) {
    if (!cfg.data_dir.empty()) {
      SplitFederation fed;
      fed.train = load_task_directory(cfg.data_dir);
      fed.val = fed.train;
      fed.test = fed.train;
      federations.push_back(std::move(fed));
    } else {
      federations.push_back(generate_synthetic(cfg.synthetic, seed));
    }
  }

  ExperimentResult result;
  for (SolverKind solver : cfg.solvers) {
    std::vector<GridCell> cells;
    for (double gamma : cfg.gamma_grid) {
      for (double sigma : cfg.sigma_grid) {
        for (int T : cfg.t_grid) {
          GridCell cell{gamma, sigma, T};
          cell.certified_eps = certify_grid_point(config, solver, gamma, sigma, T);
          for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
            FederationConfig fed = cfg.federation;
            fed.gamma = gamma;
            fed.sigma = sigma;
            fed.T = T;
            fed.seed = cfg.seeds[si];
            fed.epsilon_target.reset();
            const auto& data = federations[si];
            const SolverOutput out =
                dispatch(config, solver, fed, data.train, &data.val);
            SeedRun run;
            run.final_val_acc =
                out.trace.rounds.back().avg_val_accuracy.value_or(0.0);
            run.test_acc =
                mean_accuracy(evaluate(cfg.model, out.models, data.test));
            cell.runs.push_back(run);
            const std::string file =
                trace_file_name(solver, gamma, sigma, T, fed.seed);
            write_trace_csv((fs::path(cfg.output_dir) / file).string(),
                            out.trace);
            result.trace_files.push_back(file);
          }
          cells.push_back(std::move(cell));
        }
      }
    }
    for (double eps : cfg.epsilon_grid) {
      const GridCell* best = nullptr;
      for (const auto& cell : cells) {
        if (cell.certified_eps > eps) continue;
        if (best == nullptr || cell.mean_val() > best->mean_val()) best = &cell;
      }
      SummaryRow row;
      row.solver = solver;
      row.epsilon_target = eps;
      if (best != nullptr) {
        row.feasible = true;
        row.epsilon_certified = best->certified_eps;
        row.gamma = best->gamma;
        row.sigma = best->sigma;
        row.T = best->T;
        row.val_acc_mean = best->mean_val();
        row.test_acc_mean = best->mean_test();
        row.test_acc_std = best->std_test();
      }
      result.summary.push_back(row);
    }
  }
  write_summary_csv((fs::path(cfg.output_dir) / "summary.csv").string(),
                    result.summary);
  return result;
}

void write_summary_csv(const std::string& path,
                       const std::vector<SummaryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "solver,epsilon_target,feasible,epsilon_certified,gamma,sigma,T,"
         "val_acc_mean,test_acc_mean,test_acc_std\n";
  for (const auto& r : rows) {
    out << to_string(r.solver) << "," << format_double(r.epsilon_target) << ","
        << (r.feasible ? "1" : "0") << ",";
    if (r.feasible) {
      out << format_double(r.epsilon_certified) << "," << format_double(r.gamma)
          << "," << format_double(r.sigma) << "," << r.T << ","
          << format_double(r.val_acc_mean) << ","
          << format_double(r.test_acc_mean) << ","
          << format_double(r.test_acc_std);
    } else {
      out << ",,,,,,";
    }
    out << "\n";
  }
}

}  // namespace privmtl
