#include "privmtl/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace privmtl {
namespace {

std::vector<int> sample_tasks(std::uint64_t seed, int round, int m, int q) {
  RngStream rng(seed, "sampling", static_cast<std::uint64_t>(round));
  std::vector<int> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < q; ++i) {
    const int j = i + static_cast<int>(rng.next_below(m - i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<int> picked(idx.begin(), idx.begin() + q);
  std::sort(picked.begin(), picked.end());
  return picked;
}

double resolve_sigma(const FederationConfig& config) {
  if (config.epsilon_target)
    return sigma_for_epsilon(*config.epsilon_target, config);
  return config.sigma;
}

PrivacyLedger fresh_ledger(const FederationConfig& config) {
  PrivacyLedger ledger;
  ledger.delta = config.effective_delta();
  ledger.convention = config.sensitivity_convention;
  return ledger;
}

std::vector<int> draw_batch(RngStream& rng, std::size_t n, int batch_size) {
  std::vector<int> batch(batch_size);
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < batch_size; ++i) {
    const int j = i + static_cast<int>(rng.next_below(n - i));
    std::swap(idx[i], idx[j]);
    batch[i] = idx[i];
  }
  return batch;
}

std::vector<ClientState> init_clients(const FederationConfig& config,
                                      const ModelSpec& spec) {
  std::vector<ClientState> clients(config.m);
  for (int k = 0; k < config.m; ++k) {
    RngStream init(config.seed, "init",
                   config.identical_init ? 0 : static_cast<std::uint64_t>(k));
    clients[k] = {k, init_params(spec, init), -1};
  }
  return clients;
}

std::vector<RngStream> init_batch_streams(const FederationConfig& config) {
  std::vector<RngStream> streams;
  streams.reserve(config.m);
  for (int k = 0; k < config.m; ++k)
    streams.emplace_back(config.seed, "batch", static_cast<std::uint64_t>(k));
  return streams;
}

ParamVector mean_of(const std::vector<ClientState>& clients) {
  ParamVector acc(clients.front().w.dim());
  for (const auto& c : clients) add_in_place(acc, c.w);
  return scale(acc, 1.0 / static_cast<double>(clients.size()));
}

std::optional<double> val_accuracy(const ModelSpec& spec,
                                   const std::vector<ParamVector>& models,
                                   const std::vector<TaskDataset>* val) {
  if (val == nullptr || !spec.classifier()) return std::nullopt;
  return mean_accuracy(evaluate(spec, models, *val));
}

}  // namespace

ParamVector client_update(const ModelSpec& spec, const ParamVector& w_start,
                          const ParamVector& w_tilde, const TaskDataset& data,
                          double eta, double lambda, int E, int batch_size,
                          RngStream& batch_rng, int round_for_errors) {
  if (E < 1) throw ConfigError("E must be >= 1");
  const bool full = batch_size <= 0 ||
                    batch_size >= static_cast<int>(data.size());
  ParamVector w = w_start;
  for (int j = 0; j < E; ++j) {
    ParamVector g;
    if (full) {
      g = local_objective_grad(spec, w, w_tilde, data, lambda);
    } else {
      const std::vector<int> batch = draw_batch(batch_rng, data.size(), batch_size);
      g = local_objective_grad(spec, w, w_tilde, data, lambda, &batch);
    }
    add_in_place(w, g, -eta);
    if (!w.all_finite())
      throw NumericError("non-finite parameters: task " +
                         std::to_string(data.task_id) + ", round " +
                         std::to_string(round_for_errors) + ", local step " +
                         std::to_string(j));
  }
  return w;
}

RoundRecord mtl_round(const ModelSpec& spec, ServerState& server,
                      std::vector<ClientState>& clients,
                      std::vector<RngStream>& batch_streams,
                      const std::vector<TaskDataset>& datasets,
                      const FederationConfig& config) {
  const int t = server.round;
  const std::vector<int> selected =
      sample_tasks(config.seed, t, config.m, config.q);

  // Client updates first; server state moves only after the full reduce.
  std::vector<ParamVector> new_models(selected.size());
  ParamVector acc(server.w_tilde.dim());
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const int k = selected[i];
    new_models[i] = client_update(spec, clients[k].w, server.w_tilde,
                                  datasets[k], config.eta, config.lambda,
                                  config.E, config.batch_size,
                                  batch_streams[k], t);
    add_in_place(acc, clip(sub(new_models[i], clients[k].w), config.gamma));
  }
  const ParamVector mean_update = scale(acc, 1.0 / config.q);
  RngStream noise(config.seed, "noise", static_cast<std::uint64_t>(t));
  server.w_tilde =
      gaussian_mechanism(add(server.w_tilde, mean_update), config.sigma, noise);
  if (config.sigma > 0.0)
    server.ledger.record(config.q * config.sigma / config.gamma,
                         static_cast<double>(config.q) / config.m);
  for (std::size_t i = 0; i < selected.size(); ++i) {
    clients[selected[i]].w = std::move(new_models[i]);
    clients[selected[i]].last_selected_round = t;
  }
  server.round = t + 1;

  RoundRecord rec;
  rec.round = t;
  rec.epsilon_spent = epsilon_for_sigma(server.ledger);
  rec.per_task_objective.resize(config.m);
  double loss_sum = 0.0;
  for (int k = 0; k < config.m; ++k) {
    rec.per_task_objective[k] = local_objective(
        spec, clients[k].w, server.w_tilde, datasets[k], config.lambda);
    loss_sum += rec.per_task_objective[k];
  }
  rec.avg_train_loss = loss_sum / config.m;
  return rec;
}

SolverOutput run_private_mtl(const FederationConfig& config,
                             const std::vector<TaskDataset>& datasets,
                             const ModelSpec& spec,
                             const std::vector<TaskDataset>* val_datasets) {
  config.validate();
  if (static_cast<int>(datasets.size()) != config.m)
    throw ConfigError("expected " + std::to_string(config.m) + " datasets");
  FederationConfig cfg = config;
  cfg.sigma = resolve_sigma(config);
  cfg.epsilon_target.reset();

  std::vector<ClientState> clients = init_clients(cfg, spec);
  std::vector<RngStream> batch_streams = init_batch_streams(cfg);
  ServerState server{mean_of(clients), 0, fresh_ledger(cfg)};

  SolverOutput out;
  out.sigma_used = cfg.sigma;
  for (int t = 0; t < cfg.T; ++t) {
    out.broadcasts.push_back(server.w_tilde);
    RoundRecord rec = mtl_round(spec, server, clients, batch_streams, datasets, cfg);
    if (val_datasets) {
      std::vector<ParamVector> models;
      for (const auto& c : clients) models.push_back(c.w);
      rec.avg_val_accuracy = val_accuracy(spec, models, val_datasets);
    }
    out.trace.rounds.push_back(std::move(rec));
  }
  for (auto& c : clients) out.models.push_back(std::move(c.w));
  out.global = server.w_tilde;
  return out;
}

namespace {

// Shared loop for FedAvg (prox = 0) and FedProx: one global model, local
// SGD restarts from the broadcast each round.
SolverOutput run_global(const FederationConfig& config,
                        const std::vector<TaskDataset>& datasets,
                        const ModelSpec& spec, double prox, bool is_private,
                        const std::vector<TaskDataset>* val_datasets) {
  config.validate();
  if (static_cast<int>(datasets.size()) != config.m)
    throw ConfigError("expected " + std::to_string(config.m) + " datasets");
  FederationConfig cfg = config;
  cfg.sigma = is_private ? resolve_sigma(config) : 0.0;
  cfg.epsilon_target.reset();

  RngStream init(cfg.seed, "init", 0);
  ParamVector w_tilde = init_params(spec, init);
  std::vector<RngStream> batch_streams = init_batch_streams(cfg);
  PrivacyLedger ledger = fresh_ledger(cfg);

  SolverOutput out;
  out.sigma_used = cfg.sigma;
  for (int t = 0; t < cfg.T; ++t) {
    out.broadcasts.push_back(w_tilde);
    const std::vector<int> selected = sample_tasks(cfg.seed, t, cfg.m, cfg.q);
    ParamVector acc(w_tilde.dim());
    for (int k : selected) {
      const ParamVector w_local =
          client_update(spec, w_tilde, w_tilde, datasets[k], cfg.eta, prox,
                        cfg.E, cfg.batch_size, batch_streams[k], t);
      add_in_place(acc, clip(sub(w_local, w_tilde), cfg.gamma));
    }
    RngStream noise(cfg.seed, "noise", static_cast<std::uint64_t>(t));
    w_tilde = gaussian_mechanism(add(w_tilde, scale(acc, 1.0 / cfg.q)),
                                 cfg.sigma, noise);
    if (cfg.sigma > 0.0)
      ledger.record(cfg.q * cfg.sigma / cfg.gamma,
                    static_cast<double>(cfg.q) / cfg.m);

    RoundRecord rec;
    rec.round = t;
    rec.epsilon_spent = epsilon_for_sigma(ledger);
    rec.per_task_objective.resize(cfg.m);
    double loss_sum = 0.0;
    for (int k = 0; k < cfg.m; ++k) {
      rec.per_task_objective[k] = empirical_loss(spec, w_tilde, datasets[k]);
      loss_sum += rec.per_task_objective[k];
    }
    rec.avg_train_loss = loss_sum / cfg.m;
    rec.avg_val_accuracy = val_accuracy(spec, {w_tilde}, val_datasets);
    out.trace.rounds.push_back(std::move(rec));
  }
  out.models.push_back(w_tilde);
  out.global = std::move(w_tilde);
  return out;
}

}  // namespace

SolverOutput run_fedavg_global(const FederationConfig& config,
                               const std::vector<TaskDataset>& datasets,
                               const ModelSpec& spec, bool is_private,
                               const std::vector<TaskDataset>* val_datasets) {
  return run_global(config, datasets, spec, 0.0, is_private, val_datasets);
}

SolverOutput run_fedprox(const FederationConfig& config,
                         const std::vector<TaskDataset>& datasets,
                         const ModelSpec& spec, double mu_prox, bool is_private,
                         const std::vector<TaskDataset>* val_datasets) {
  if (mu_prox < 0.0) throw ConfigError("mu_prox must be >= 0");
  return run_global(config, datasets, spec, mu_prox, is_private, val_datasets);
}

SolverOutput run_naive_dp_mtl(const FederationConfig& config,
                              const std::vector<TaskDataset>& datasets,
                              const ModelSpec& spec,
                              const std::vector<TaskDataset>* val_datasets) {
  config.validate();
  if (static_cast<int>(datasets.size()) != config.m)
    throw ConfigError("expected " + std::to_string(config.m) + " datasets");
  FederationConfig cfg = config;
  if (config.epsilon_target) {
    // The concatenated release exposes each task's whole block, so the
    // sensitivity loses the 1/m averaging; calibrate as a single-client
    // mechanism.
    FederationConfig block = config;
    block.delta = config.effective_delta();  // resolve before shrinking m
    block.m = 1;
    block.q = 1;
    cfg.sigma = sigma_for_epsilon(*config.epsilon_target, block);
    cfg.epsilon_target.reset();
  }

  std::vector<ClientState> clients = init_clients(cfg, spec);
  std::vector<RngStream> batch_streams = init_batch_streams(cfg);
  PrivacyLedger ledger = fresh_ledger(cfg);

  SolverOutput out;
  out.sigma_used = cfg.sigma;
  for (int t = 0; t < cfg.T; ++t) {
    const ParamVector w_bar = mean_of(clients);
    out.broadcasts.push_back(w_bar);
    RngStream noise(cfg.seed, "noise", static_cast<std::uint64_t>(t));
    std::vector<ParamVector> noisy_updates(cfg.m);
    for (int k = 0; k < cfg.m; ++k) {
      const ParamVector w_new =
          client_update(spec, clients[k].w, w_bar, datasets[k], cfg.eta,
                        cfg.lambda, cfg.E, cfg.batch_size, batch_streams[k], t);
      noisy_updates[k] = gaussian_mechanism(
          clip(sub(w_new, clients[k].w), cfg.gamma), cfg.sigma, noise);
    }
    for (int k = 0; k < cfg.m; ++k) {
      add_in_place(clients[k].w, noisy_updates[k]);
      clients[k].last_selected_round = t;
    }
    if (cfg.sigma > 0.0) ledger.record(cfg.sigma / cfg.gamma, 1.0);

    RoundRecord rec;
    rec.round = t;
    rec.epsilon_spent = epsilon_for_sigma(ledger);
    rec.per_task_objective.resize(cfg.m);
    double loss_sum = 0.0;
    for (int k = 0; k < cfg.m; ++k) {
      rec.per_task_objective[k] =
          empirical_loss(spec, clients[k].w, datasets[k]);
      loss_sum += rec.per_task_objective[k];
    }
    rec.avg_train_loss = loss_sum / cfg.m;
    if (val_datasets) {
      std::vector<ParamVector> models;
      for (const auto& c : clients) models.push_back(c.w);
      rec.avg_val_accuracy = val_accuracy(spec, models, val_datasets);
    }
    out.trace.rounds.push_back(std::move(rec));
  }
  for (auto& c : clients) out.models.push_back(std::move(c.w));
  return out;
}

ParamVector finetune(const ModelSpec& spec, const ParamVector& w_start,
                     const TaskDataset& data, FinetuneMethod method, int steps,
                     double eta, double lambda) {
  if (steps < 1) throw ConfigError("finetune needs steps >= 1");
  const double anchor = method == FinetuneMethod::kMeanReg ? lambda : 0.0;
  ParamVector w = w_start;
  for (int j = 0; j < steps; ++j) {
    const ParamVector g = local_objective_grad(spec, w, w_start, data, anchor);
    add_in_place(w, g, -eta);
    if (!w.all_finite())
      throw NumericError("non-finite parameters during finetuning, step " +
                         std::to_string(j));
  }
  return w;
}

std::vector<TaskMetrics> evaluate(const ModelSpec& spec,
                                  const std::vector<ParamVector>& models,
                                  const std::vector<TaskDataset>& datasets) {
  if (datasets.empty()) throw ConfigError("evaluate: no datasets");
  if (models.size() != datasets.size() && models.size() != 1)
    throw ConfigError("evaluate: need one model per task or a single model");
  std::vector<TaskMetrics> out(datasets.size());
  for (std::size_t k = 0; k < datasets.size(); ++k) {
    const ParamVector& w = models.size() == 1 ? models[0] : models[k];
    out[k].loss = empirical_loss(spec, w, datasets[k]);
    if (spec.classifier()) out[k].accuracy = accuracy(spec, w, datasets[k]);
  }
  return out;
}

double empirical_sensitivity_probe(const FederationConfig& config,
                                   const ModelSpec& spec,
                                   const std::vector<TaskDataset>& datasets_a,
                                   const std::vector<TaskDataset>& datasets_b,
                                   int trials) {
  if (datasets_a.size() != datasets_b.size())
    throw ConfigError("sensitivity probe: federations must have equal size");
  int differing = 0;
  for (std::size_t k = 0; k < datasets_a.size(); ++k) {
    const auto& a = datasets_a[k].examples;
    const auto& b = datasets_b[k].examples;
    bool same = a.size() == b.size();
    for (std::size_t i = 0; same && i < a.size(); ++i)
      same = a[i].features == b[i].features && a[i].label == b[i].label;
    if (!same) ++differing;
  }
  if (differing > 1)
    throw ConfigError("sensitivity probe: federations differ in " +
                      std::to_string(differing) + " tasks, expected at most 1");
  FederationConfig cfg = config;
  cfg.sigma = 0.0;
  cfg.epsilon_target.reset();
  cfg.T = 1;
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    cfg.seed = config.seed + static_cast<std::uint64_t>(trial);
    const SolverOutput a = run_private_mtl(cfg, datasets_a, spec);
    const SolverOutput b = run_private_mtl(cfg, datasets_b, spec);
    worst = std::max(worst, l2_norm(sub(a.global, b.global)));
  }
  return worst;
}

double mean_accuracy(const std::vector<TaskMetrics>& metrics) {
  double s = 0.0;
  for (const auto& m : metrics) s += m.accuracy.value_or(0.0);
  return s / static_cast<double>(metrics.size());
}

}  // namespace privmtl
