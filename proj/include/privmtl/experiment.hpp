#pragma once

#include <map>
#include <string>
#include <vector>

#include "privmtl/data.hpp"
#include "privmtl/objectives.hpp"
#include "privmtl/types.hpp"

namespace privmtl {

/// Flat `section.key = value` config file. CLI flags override file values.
using KeyValueConfig = std::map<std::string, std::string>;

KeyValueConfig parse_config_file(const std::string& path);
KeyValueConfig parse_config_text(const std::string& text);

enum class SolverKind { kPrivateMtl, kFedAvg, kFedProx, kNaiveDpMtl, kLocalOnly };

SolverKind solver_from_string(const std::string& s);
std::string to_string(SolverKind s);

struct ExperimentConfig {
  FederationConfig federation;
  ModelSpec model;
  SyntheticSpec synthetic;
  std::string data_dir;     // when set, load instead of generating
  std::string output_dir = "out";
  std::vector<SolverKind> solvers = {SolverKind::kPrivateMtl, SolverKind::kFedAvg};
  double mu_prox = -1.0;    // <0 means "use federation.lambda"
  std::vector<double> gamma_grid = {0.2, 0.5, 1.0};
  std::vector<double> sigma_grid = {0.02, 0.05, 0.1};
  std::vector<int> t_grid = {2, 10, 30, 60};
  std::vector<double> epsilon_grid = {0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 2.0, 4.0};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

  void validate() const;
};

ExperimentConfig experiment_from_kv(const KeyValueConfig& kv);

struct SummaryRow {
  SolverKind solver;
  double epsilon_target = 0.0;
  bool feasible = false;
  double epsilon_certified = 0.0;  // accountant value of the chosen point
  double gamma = 0.0, sigma = 0.0;
  int T = 0;
  double val_acc_mean = 0.0;
  double test_acc_mean = 0.0;
  double test_acc_std = 0.0;
};

struct ExperimentResult {
  std::vector<SummaryRow> summary;
  std::vector<std::string> trace_files;
};

/// Full sweep: every solver x grid point x seed, then per-epsilon selection
/// of the best-validation grid point whose certified epsilon fits the
/// target. Writes traces and summary.csv under config.output_dir.
ExperimentResult run_experiment(const ExperimentConfig& config);

void write_summary_csv(const std::string& path,
                       const std::vector<SummaryRow>& rows);

}  // namespace privmtl
