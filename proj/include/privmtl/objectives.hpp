#pragma once

#include <vector>

#include "privmtl/rng.hpp"
#include "privmtl/types.hpp"

namespace privmtl {

enum class ModelFamily {
  kSquaredErrorMean,    // l(x, w) = ||x - w||^2, no labels
  kLinearRegression,    // squared error with bias, labels are reals
  kLogisticRegression,  // cross-entropy with sigmoid, labels in {0,1}
  kMlp1Hidden,          // one tanh hidden layer, sigmoid output, labels in {0,1}
};

struct ModelSpec {
  ModelFamily family = ModelFamily::kLogisticRegression;
  int feature_width = 1;
  int hidden_width = 16;  // mlp only

  int dim() const {
    switch (family) {
      case ModelFamily::kSquaredErrorMean:
        return feature_width;
      case ModelFamily::kLinearRegression:
      case ModelFamily::kLogisticRegression:
        return feature_width + 1;  // bias appended as last coordinate
      case ModelFamily::kMlp1Hidden:
        return hidden_width * (feature_width + 2) + 1;
    }
    return 0;
  }

  bool convex() const { return family != ModelFamily::kMlp1Hidden; }
  bool classifier() const {
    return family == ModelFamily::kLogisticRegression ||
           family == ModelFamily::kMlp1Hidden;
  }
};

ModelFamily model_family_from_string(const std::string& s);
std::string to_string(ModelFamily f);

/// Summed (not averaged) loss over the whole dataset.
double empirical_loss(const ModelSpec& spec, const ParamVector& w,
                      const TaskDataset& data);

/// Exact gradient of the summed loss. When `batch` is non-null the batch
/// gradient is scaled by n_k/|batch| so its expectation matches the
/// full-data gradient.
ParamVector empirical_grad(const ModelSpec& spec, const ParamVector& w,
                           const TaskDataset& data,
                           const std::vector<int>* batch = nullptr);

/// lambda/2 * ||w - w_tilde||^2 + empirical_loss(w).
double local_objective(const ModelSpec& spec, const ParamVector& w,
                       const ParamVector& w_tilde, const TaskDataset& data,
                       double lambda);

ParamVector local_objective_grad(const ModelSpec& spec, const ParamVector& w,
                                 const ParamVector& w_tilde,
                                 const TaskDataset& data, double lambda,
                                 const std::vector<int>* batch = nullptr);

/// Smoothness constant L of the summed empirical loss when analytically
/// known (exact for squared_error_mean, a trace upper bound for the linear
/// families). Throws for the mlp.
double smoothness_bound(const ModelSpec& spec, const TaskDataset& data);

/// Strong-convexity constant; nonzero only for squared_error_mean.
double strong_convexity_bound(const ModelSpec& spec, const TaskDataset& data);

/// Fresh parameters from the given stream (Xavier-uniform for the mlp,
/// uniform[-0.5, 0.5) otherwise).
ParamVector init_params(const ModelSpec& spec, RngStream& rng);

/// Mean prediction accuracy of a classifier on `data` (0.5 threshold).
double accuracy(const ModelSpec& spec, const ParamVector& w,
                const TaskDataset& data);

}  // namespace privmtl
