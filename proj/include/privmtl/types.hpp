#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace privmtl {

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense vector of model parameters. Fixed dimension, finite entries.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t dim, double fill = 0.0) : v_(dim, fill) {}
  explicit ParamVector(std::vector<double> values) : v_(std::move(values)) {}
  ParamVector(std::initializer_list<double> values) : v_(values) {}

  std::size_t dim() const { return v_.size(); }
  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }
  const std::vector<double>& values() const { return v_; }
  std::vector<double>& values() { return v_; }

  bool all_finite() const {
    for (double x : v_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  friend bool operator==(const ParamVector& a, const ParamVector& b) {
    return a.v_ == b.v_;
  }

 private:
  std::vector<double> v_;
};

inline void require_same_dim(const ParamVector& a, const ParamVector& b) {
  if (a.dim() != b.dim())
    throw DimensionError("ParamVector dimension mismatch: " +
                         std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()));
}

inline ParamVector add(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b);
  ParamVector r(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) r[i] = a[i] + b[i];
  return r;
}

inline ParamVector sub(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b);
  ParamVector r(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) r[i] = a[i] - b[i];
  return r;
}

inline ParamVector scale(const ParamVector& a, double c) {
  ParamVector r(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) r[i] = c * a[i];
  return r;
}

inline void add_in_place(ParamVector& a, const ParamVector& b, double c = 1.0) {
  require_same_dim(a, b);
  for (std::size_t i = 0; i < a.dim(); ++i) a[i] += c * b[i];
}

inline double dot(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(const ParamVector& a) { return std::sqrt(dot(a, a)); }

/// One labeled example: fixed-width feature vector plus a real label
/// ({0,1} for classification, raw real for regression).
struct Example {
  std::vector<double> features;
  double label = 0.0;
};

/// One task's private data.
struct TaskDataset {
  int task_id = 0;
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  std::size_t feature_width() const {
    return examples.empty() ? 0 : examples.front().features.size();
  }
  void validate() const {
    if (examples.empty())
      throw ConfigError("task " + std::to_string(task_id) + " has no examples");
    const std::size_t w = examples.front().features.size();
    for (const auto& ex : examples)
      if (ex.features.size() != w)
        throw ConfigError("task " + std::to_string(task_id) +
                          ": ragged feature widths");
  }
};

enum class SensitivityConvention {
  kPaper,         // replace-one difference of a clipped update treated as gamma
  kConservative,  // worst-case 2*gamma
};

inline double relative_sensitivity(SensitivityConvention c) {
  return c == SensitivityConvention::kPaper ? 1.0 : 2.0;
}

/// Hyperparameters of one federated run plus privacy targets.
struct FederationConfig {
  int m = 1;             // task count
  int q = 1;             // sampled tasks per round, 1 <= q <= m
  int T = 1;             // communication rounds
  int E = 1;             // local steps per round
  double lambda = 0.0;   // mean-regularization weight
  double eta = 0.01;     // learning rate
  double gamma = 1.0;    // clip bound
  double sigma = 0.0;    // per-coordinate noise std
  double delta = 0.0;    // DP delta; 0 means "set to 1/m"
  std::optional<double> epsilon_target;  // if set, sigma is calibrated
  std::uint64_t seed = 0;
  int batch_size = 0;    // 0 means full batch
  bool identical_init = false;
  SensitivityConvention sensitivity_convention = SensitivityConvention::kPaper;

  double effective_delta() const { return delta > 0.0 ? delta : 1.0 / m; }

  void validate() const {
    if (m < 1) throw ConfigError("m must be >= 1");
    if (q < 1 || q > m) throw ConfigError("q must satisfy 1 <= q <= m");
    if (T < 1) throw ConfigError("T must be >= 1");
    if (E < 1) throw ConfigError("E must be >= 1");
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (eta < 0.0) throw ConfigError("eta must be >= 0");
    if (gamma <= 0.0) throw ConfigError("gamma must be > 0");
    if (sigma < 0.0) throw ConfigError("sigma must be >= 0");
    const double d = effective_delta();
    if (d <= 0.0 || d >= 1.0) throw ConfigError("delta must lie in (0,1)");
    if (epsilon_target && *epsilon_target <= 0.0)
      throw ConfigError("epsilon_target must be > 0");
    if (batch_size < 0) throw ConfigError("batch_size must be >= 0");
  }
};

/// One row of a run trace.
struct RoundRecord {
  int round = 0;
  double avg_train_loss = 0.0;
  double epsilon_spent = 0.0;
  std::vector<double> per_task_objective;  // f_k at end of round
  std::optional<double> avg_val_accuracy;
};

struct RunTrace {
  std::vector<RoundRecord> rounds;
};

}  // namespace privmtl
