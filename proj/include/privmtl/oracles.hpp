#pragma once

#include <functional>
#include <vector>

#include "privmtl/solvers.hpp"
#include "privmtl/types.hpp"

namespace privmtl {

/// Mean-regularized quadratic federation: task k holds points x_{k,i} and
/// pays sum_i ||x_i - w_k||^2 + lambda/2 ||w_k - w_bar||^2.
struct QuadraticInstance {
  std::vector<std::vector<ParamVector>> task_points;  // [task][example]
  double lambda = 0.0;

  int m() const { return static_cast<int>(task_points.size()); }
  int dim() const { return static_cast<int>(task_points.front().front().dim()); }

  std::vector<TaskDataset> to_datasets() const;
  /// (1/m) sum_k [ lambda/2 ||w_k - w_bar||^2 + sum_i ||x_i - w_k||^2 ].
  double objective(const std::vector<ParamVector>& models) const;
};

struct FixedPoint {
  std::vector<ParamVector> models;
  ParamVector mean;
};

/// Exact minimizer of the joint mean-regularized quadratic objective via a
/// direct linear solve (partial-pivot Gaussian elimination, in-repo).
FixedPoint mean_reg_fixed_point(const QuadraticInstance& instance);

/// Solves A x = b in place with partial pivoting; throws on singularity.
std::vector<double> solve_linear_system(std::vector<std::vector<double>> a,
                                        std::vector<double> b);

/// Central finite differences of fn around w.
ParamVector finite_diff_grad(const std::function<double(const ParamVector&)>& fn,
                             const ParamVector& w, double step = 1e-6);

/// Hand-traceable scalar replay of the private MTL loop for tiny,
/// noise-free configs (m <= 3, d = 1, sigma = 0, full batch). Returns the
/// per-task models after T rounds; must match run_private_mtl bitwise.
std::vector<ParamVector> exhaustive_small_mtl(
    const FederationConfig& config, const std::vector<TaskDataset>& datasets,
    const ModelSpec& spec);

}  // namespace privmtl
