// privmtl: deterministic simulator for privately mean-regularized
// multi-task learning, with a certified Renyi-DP accountant.
//
// Exit codes: 0 success, 2 configuration error, 3 infeasible privacy
// target, 4 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "privmtl/data.hpp"
#include "privmtl/experiment.hpp"
#include "privmtl/oracles.hpp"
#include "privmtl/privacy.hpp"
#include "privmtl/solvers.hpp"

namespace {

namespace fs = std::filesystem;
using namespace privmtl;

struct CommonFlags {
  std::string config_file;
  std::map<std::string, std::string> overrides;
};

// Every flag mirrors a config-file key; CLI values override file values.
void add_config_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_file, "key-value config file");
  auto kv = [&flags, cmd](const std::string& flag, const std::string& key,
                          const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [&flags, key](const std::string& v) { flags.overrides[key] = v; },
        help);
  };
  kv("--m", "federation.m", "task count");
  kv("--q", "federation.q", "sampled tasks per round");
  kv("--t", "federation.t", "communication rounds");
  kv("--e", "federation.e", "local steps per round");
  kv("--lambda", "federation.lambda", "mean-regularization weight");
  kv("--eta", "federation.eta", "learning rate");
  kv("--gamma", "federation.gamma", "clip bound");
  kv("--sigma", "federation.sigma", "per-coordinate noise std");
  kv("--delta", "federation.delta", "DP delta (0 means 1/m)");
  kv("--epsilon-target", "federation.epsilon_target",
     "calibrate sigma to this epsilon");
  kv("--batch-size", "federation.batch_size", "minibatch size or 'full'");
  kv("--identical-init", "federation.identical_init",
     "start all tasks from the same init");
  kv("--sensitivity-convention", "federation.sensitivity_convention",
     "paper | conservative");
  kv("--model", "model.family",
     "squared_error_mean | linear_regression | logistic_regression | "
     "mlp_1hidden");
  kv("--hidden-width", "model.hidden_width", "mlp hidden width");
  kv("--n-k", "synthetic.n_k", "examples per synthetic task");
  kv("--feature-dim", "synthetic.feature_dim", "synthetic feature width");
  kv("--heterogeneity", "synthetic.heterogeneity",
     "synthetic task heterogeneity h");
  kv("--label-noise", "synthetic.label_noise", "synthetic label flip rate");
  kv("--data-dir", "data.dir", "load task_<k>.csv instead of generating");
  kv("--output-dir", "output.dir", "where traces and summaries go");
  kv("--mu-prox", "fedprox.mu", "FedProx proximal weight");
  kv("--solvers", "solvers", "comma list of solvers");
  kv("--gamma-grid", "sweep.gamma_grid", "comma list of clip bounds");
  kv("--sigma-grid", "sweep.sigma_grid", "comma list of noise stds");
  kv("--t-grid", "sweep.t_grid", "comma list of round counts");
  kv("--epsilon-grid", "sweep.epsilon_grid", "comma list of epsilon targets");
  kv("--seeds", "sweep.seeds", "comma list of sweep seeds");
}

ExperimentConfig resolve_config(const CommonFlags& flags) {
  KeyValueConfig kv;
  if (!flags.config_file.empty()) kv = parse_config_file(flags.config_file);
  for (const auto& [k, v] : flags.overrides) kv[k] = v;
  return experiment_from_kv(kv);
}

SplitFederation resolve_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (!cfg.data_dir.empty()) {
    SplitFederation fed;
    fed.train = load_task_directory(cfg.data_dir);
    fed.val = fed.train;
    fed.test = fed.train;
    return fed;
  }
  return generate_synthetic(cfg.synthetic, seed);
}

std::string output_dir(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("PRIVMTL_OUTPUT_DIR"); env && *env)
    return env;
  return cfg.output_dir;
}

int cmd_train(const CommonFlags& flags, std::uint64_t seed,
              const std::string& solver_name) {
  ExperimentConfig cfg = resolve_config(flags);
  cfg.federation.seed = seed;
  cfg.federation.validate();
  if (cfg.data_dir.empty()) cfg.synthetic.validate();

  const SolverKind solver = solver_from_string(solver_name);
  const SplitFederation data = resolve_data(cfg, seed);

  SolverOutput out;
  const double mu = cfg.mu_prox >= 0.0 ? cfg.mu_prox : cfg.federation.lambda;
  switch (solver) {
    case SolverKind::kPrivateMtl:
      out = run_private_mtl(cfg.federation, data.train, cfg.model, &data.val);
      break;
    case SolverKind::kFedAvg:
      out = run_fedavg_global(cfg.federation, data.train, cfg.model,
                              cfg.federation.sigma > 0.0 ||
                                  cfg.federation.epsilon_target.has_value(),
                              &data.val);
      break;
    case SolverKind::kFedProx:
      out = run_fedprox(cfg.federation, data.train, cfg.model, mu,
                        cfg.federation.sigma > 0.0 ||
                            cfg.federation.epsilon_target.has_value(),
                        &data.val);
      break;
    case SolverKind::kNaiveDpMtl:
      out = run_naive_dp_mtl(cfg.federation, data.train, cfg.model, &data.val);
      break;
    case SolverKind::kLocalOnly: {
      FederationConfig local = cfg.federation;
      local.lambda = 0.0;
      local.sigma = 0.0;
      local.epsilon_target.reset();
      out = run_private_mtl(local, data.train, cfg.model, &data.val);
      break;
    }
  }

  const std::string dir = output_dir(cfg);
  fs::create_directories(dir);
  const std::string trace_path =
      (fs::path(dir) / ("trace_" + to_string(solver) + "_seed" +
                        std::to_string(seed) + ".csv"))
          .string();
  write_trace_csv(trace_path, out.trace);

  const auto metrics = evaluate(cfg.model, out.models, data.test);
  std::cout << "solver=" << to_string(solver) << " seed=" << seed
            << " sigma=" << format_double(out.sigma_used)
            << " epsilon_spent="
            << format_double(out.trace.rounds.back().epsilon_spent)
            << " final_train_loss="
            << format_double(out.trace.rounds.back().avg_train_loss);
  if (cfg.model.classifier())
    std::cout << " test_acc=" << format_double(mean_accuracy(metrics));
  std::cout << "\ntrace=" << trace_path << "\n";
  return 0;
}

int cmd_sweep(const CommonFlags& flags) {
  const ExperimentConfig cfg = resolve_config(flags);
  const ExperimentResult result = run_experiment(cfg);
  std::cout << "wrote " << result.trace_files.size() << " traces and "
            << (fs::path(output_dir(cfg)) / "summary.csv").string() << "\n";
  for (const auto& row : result.summary) {
    std::cout << to_string(row.solver)
              << " eps_target=" << format_double(row.epsilon_target);
    if (row.feasible)
      std::cout << " eps_certified=" << format_double(row.epsilon_certified)
                << " test_acc=" << format_double(row.test_acc_mean) << "+-"
                << format_double(row.test_acc_std);
    else
      std::cout << " infeasible";
    std::cout << "\n";
  }
  return 0;
}

int cmd_certify(const CommonFlags& flags) {
  const ExperimentConfig cfg = resolve_config(flags);
  const FederationConfig& f = cfg.federation;
  f.validate();
  PrivacyLedger ledger;
  ledger.delta = f.effective_delta();
  ledger.convention = f.sensitivity_convention;
  for (int t = 0; t < f.T; ++t)
    ledger.record(f.q * f.sigma / f.gamma, static_cast<double>(f.q) / f.m);
  const double eps = epsilon_for_sigma(ledger);
  std::cout << "epsilon=" << format_double(eps)
            << " delta=" << format_double(ledger.delta) << " (sigma="
            << format_double(f.sigma) << ", gamma=" << format_double(f.gamma)
            << ", T=" << f.T << ", m=" << f.m << ", q=" << f.q << ")\n";
  return 0;
}

int cmd_calibrate(const CommonFlags& flags) {
  const ExperimentConfig cfg = resolve_config(flags);
  const FederationConfig& f = cfg.federation;
  if (!f.epsilon_target)
    throw ConfigError("calibrate requires --epsilon-target");
  f.validate();
  const double sigma = sigma_for_epsilon(*f.epsilon_target, f);
  FederationConfig check = f;
  check.sigma = sigma;
  PrivacyLedger ledger;
  ledger.delta = f.effective_delta();
  ledger.convention = f.sensitivity_convention;
  for (int t = 0; t < f.T; ++t)
    ledger.record(f.q * sigma / f.gamma, static_cast<double>(f.q) / f.m);
  std::cout << "sigma=" << format_double(sigma)
            << " epsilon_certified=" << format_double(epsilon_for_sigma(ledger))
            << " target=" << format_double(*f.epsilon_target)
            << " delta=" << format_double(f.effective_delta()) << "\n";
  return 0;
}

int cmd_gen_data(const CommonFlags& flags, std::uint64_t seed,
                 const std::string& out_path) {
  ExperimentConfig cfg = resolve_config(flags);
  cfg.synthetic.validate();
  const SplitFederation fed = generate_synthetic(cfg.synthetic, seed);
  write_task_directory((fs::path(out_path) / "train").string(), fed.train);
  write_task_directory((fs::path(out_path) / "val").string(), fed.val);
  write_task_directory((fs::path(out_path) / "test").string(), fed.test);
  std::cout << "wrote " << fed.train.size() << " tasks under " << out_path
            << "/{train,val,test}\n";
  return 0;
}

int cmd_probe(const CommonFlags& flags, int trials) {
  ExperimentConfig cfg = resolve_config(flags);
  FederationConfig fed = cfg.federation;
  fed.sigma = 0.0;
  fed.T = 1;
  fed.epsilon_target.reset();
  fed.validate();

  ModelSpec spec;
  spec.family = ModelFamily::kSquaredErrorMean;
  spec.feature_width = 1;

  // Neighboring federations differing only in task 0's data; the extreme
  // points drive task 0's clipped update to opposite ends of the clip ball.
  std::vector<TaskDataset> base;
  for (int k = 0; k < fed.m; ++k) {
    TaskDataset task;
    task.task_id = k;
    task.examples.push_back(Example{{0.0}, 0.0});
    base.push_back(task);
  }
  std::vector<TaskDataset> pos = base, neg = base;
  pos[0].examples[0].features[0] = 1e6;
  neg[0].examples[0].features[0] = -1e6;

  const double probe =
      empirical_sensitivity_probe(fed, spec, pos, neg, trials);
  const double worst_case = 2.0 * fed.gamma / fed.m;
  const double paper_bound = fed.gamma / fed.m;
  std::cout << "max aggregate difference over " << trials
            << " trials: " << format_double(probe) << "\n"
            << "worst-case bound 2*gamma/m = " << format_double(worst_case)
            << (probe <= worst_case + 1e-9 ? " (holds)" : " (VIOLATED)")
            << "\n"
            << "paper-convention bound gamma/m = "
            << format_double(paper_bound)
            << (probe <= paper_bound + 1e-9 ? " (holds)" : " (VIOLATED)")
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"privmtl: private mean-regularized multi-task learning"};
  app.require_subcommand(1);

  CommonFlags train_flags, sweep_flags, certify_flags, calibrate_flags,
      gen_flags, probe_flags;
  std::uint64_t train_seed = 0, gen_seed = 0;
  std::string train_solver = "private_mtl";
  std::string gen_out = "data";
  int probe_trials = 10000;

  CLI::App* train = app.add_subcommand("train", "one training run");
  add_config_flags(train, train_flags);
  train->add_option("--seed", train_seed, "run seed (mandatory)")->required();
  train->add_option("--solver", train_solver,
                    "private_mtl | fedavg | fedprox | naive_dp_mtl | "
                    "local_only");

  CLI::App* sweep = app.add_subcommand(
      "sweep", "grid sweep with per-epsilon validation selection");
  add_config_flags(sweep, sweep_flags);

  CLI::App* certify =
      app.add_subcommand("certify", "epsilon spent by (sigma, gamma, T, m, q)");
  add_config_flags(certify, certify_flags);

  CLI::App* calibrate = app.add_subcommand(
      "calibrate", "smallest sigma certifying --epsilon-target");
  add_config_flags(calibrate, calibrate_flags);

  CLI::App* gen = app.add_subcommand("gen-data", "write synthetic task CSVs");
  add_config_flags(gen, gen_flags);
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--out", gen_out, "output directory");

  CLI::App* probe = app.add_subcommand(
      "probe-sensitivity", "empirical replace-one sensitivity witness");
  add_config_flags(probe, probe_flags);
  probe->add_option("--trials", probe_trials, "number of randomized trials");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) return cmd_train(train_flags, train_seed, train_solver);
    if (sweep->parsed()) return cmd_sweep(sweep_flags);
    if (certify->parsed()) return cmd_certify(certify_flags);
    if (calibrate->parsed()) return cmd_calibrate(calibrate_flags);
    if (gen->parsed()) return cmd_gen_data(gen_flags, gen_seed, gen_out);
    if (probe->parsed()) return cmd_probe(probe_flags, probe_trials);
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible privacy target: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
