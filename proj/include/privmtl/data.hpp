#pragma once

#include <string>
#include <vector>

#include "privmtl/types.hpp"

namespace privmtl {

/// Heterogeneous logistic federation: task k's labels come from a per-task
/// true weight = shared weight + heterogeneity * (unit-sphere draw).
struct SyntheticSpec {
  int m = 10;
  int n_k = 50;
  int feature_dim = 5;
  double heterogeneity = 0.0;
  double label_noise = 0.0;

  void validate() const {
    if (m < 1) throw ConfigError("synthetic: m must be >= 1");
    if (n_k < 2) throw ConfigError("synthetic: n_k must be >= 2");
    if (feature_dim < 1) throw ConfigError("synthetic: feature_dim must be >= 1");
    if (heterogeneity < 0.0) throw ConfigError("synthetic: heterogeneity must be >= 0");
    if (label_noise < 0.0 || label_noise > 1.0)
      throw ConfigError("synthetic: label_noise must lie in [0,1]");
  }
};

struct SplitFederation {
  std::vector<TaskDataset> train;
  std::vector<TaskDataset> val;
  std::vector<TaskDataset> test;
  std::vector<ParamVector> true_weights;  // dim feature_dim + 1 (bias last)
};

/// Deterministic per-seed generation with 80/10/10 per-task splits.
SplitFederation generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Loads task_<k>.csv, k = 0..m-1 contiguous, header `f0,...,f{p-1},label`.
std::vector<TaskDataset> load_task_directory(const std::string& path);

/// Writes one task_<k>.csv per task in the directory format above.
void write_task_directory(const std::string& path,
                          const std::vector<TaskDataset>& tasks);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double x);

/// Trace CSV: `round,avg_train_loss,epsilon_spent,avg_val_acc` (empty cell
/// when no validation accuracy was recorded).
void write_trace_csv(const std::string& path, const RunTrace& trace);
RunTrace read_trace_csv(const std::string& path);

}  // namespace privmtl
