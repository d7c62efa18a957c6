#pragma once

#include <vector>

#include "privmtl/objectives.hpp"
#include "privmtl/privacy.hpp"
#include "privmtl/rng.hpp"
#include "privmtl/types.hpp"

namespace privmtl {

struct ClientState {
  int task_id = 0;
  ParamVector w;
  int last_selected_round = -1;
};

struct ServerState {
  ParamVector w_tilde;
  int round = 0;
  PrivacyLedger ledger;
};

struct SolverOutput {
  std::vector<ParamVector> models;  // one per task for MTL solvers
  ParamVector global;               // single model for global solvers
  RunTrace trace;
  std::vector<ParamVector> broadcasts;  // w_tilde at the start of each round
  double sigma_used = 0.0;
};

enum class FinetuneMethod { kVanilla, kMeanReg };

/// E steps of w <- w - eta * (grad l_k(w) + lambda (w - w_tilde)), starting
/// from w_start. Minibatches (when batch_size > 0 and smaller than the
/// dataset) are drawn from `batch_rng`. Throws NumericError naming
/// round/step if parameters go non-finite.
ParamVector client_update(const ModelSpec& spec, const ParamVector& w_start,
                          const ParamVector& w_tilde, const TaskDataset& data,
                          double eta, double lambda, int E, int batch_size,
                          RngStream& batch_rng, int round_for_errors = -1);

/// One round of the private mean-regularized MTL solver: sample S_t, run
/// client updates, clip, average, add noise, advance the ledger. Mutates
/// `server` and the selected entries of `clients`.
RoundRecord mtl_round(const ModelSpec& spec, ServerState& server,
                      std::vector<ClientState>& clients,
                      std::vector<RngStream>& batch_streams,
                      const std::vector<TaskDataset>& datasets,
                      const FederationConfig& config);

/// Full private mean-regularized MTL run (personalized per-task models).
SolverOutput run_private_mtl(const FederationConfig& config,
                             const std::vector<TaskDataset>& datasets,
                             const ModelSpec& spec,
                             const std::vector<TaskDataset>* val_datasets = nullptr);

/// FedAvg with optional clipping+noise; one global model.
SolverOutput run_fedavg_global(const FederationConfig& config,
                               const std::vector<TaskDataset>& datasets,
                               const ModelSpec& spec, bool is_private,
                               const std::vector<TaskDataset>* val_datasets = nullptr);

/// FedProx: FedAvg whose local steps carry a proximal pull toward the
/// current global model; still one global model.
SolverOutput run_fedprox(const FederationConfig& config,
                         const std::vector<TaskDataset>& datasets,
                         const ModelSpec& spec, double mu_prox, bool is_private,
                         const std::vector<TaskDataset>* val_datasets = nullptr);

/// DPSGD applied to the concatenated per-task models: every block of the
/// update is clipped and noised, including against its owner's data.
SolverOutput run_naive_dp_mtl(const FederationConfig& config,
                              const std::vector<TaskDataset>& datasets,
                              const ModelSpec& spec,
                              const std::vector<TaskDataset>* val_datasets = nullptr);

/// Local SGD from w_start; kMeanReg anchors to w_start with weight lambda.
ParamVector finetune(const ModelSpec& spec, const ParamVector& w_start,
                     const TaskDataset& data, FinetuneMethod method, int steps,
                     double eta, double lambda);

struct TaskMetrics {
  double loss = 0.0;
  std::optional<double> accuracy;
};

/// Per-task metrics. One model per task pairs model k with task k; a single
/// model is broadcast to every task.
std::vector<TaskMetrics> evaluate(const ModelSpec& spec,
                                  const std::vector<ParamVector>& models,
                                  const std::vector<TaskDataset>& datasets);

double mean_accuracy(const std::vector<TaskMetrics>& metrics);

/// Empirical lower-bound witness for the aggregate's replace-one
/// sensitivity: runs one noiseless round on two federations differing in a
/// single task's dataset and reports the largest aggregate difference seen
/// over `trials` seeds.
double empirical_sensitivity_probe(const FederationConfig& config,
                                   const ModelSpec& spec,
                                   const std::vector<TaskDataset>& datasets_a,
                                   const std::vector<TaskDataset>& datasets_b,
                                   int trials);

}  // namespace privmtl
