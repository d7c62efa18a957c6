#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "privmtl/data.hpp"
#include "privmtl/objectives.hpp"
#include "privmtl/solvers.hpp"

using namespace privmtl;

namespace {

TaskDataset scalar_points(int task_id, std::vector<double> xs) {
  TaskDataset d;
  d.task_id = task_id;
  for (double x : xs) d.examples.push_back({{x}, 0.0});
  return d;
}

FederationConfig small_config() {
  FederationConfig cfg;
  cfg.m = 3;
  cfg.q = 3;
  cfg.T = 4;
  cfg.E = 2;
  cfg.lambda = 0.5;
  cfg.eta = 0.05;
  cfg.gamma = 1.0;
  cfg.sigma = 0.0;
  cfg.delta = 0.1;
  cfg.seed = 21;
  return cfg;
}

std::vector<TaskDataset> small_datasets() {
  return {scalar_points(0, {1.0, 2.0}), scalar_points(1, {-1.0}),
          scalar_points(2, {0.5, 0.5, 3.0})};
}

const ModelSpec kScalar{ModelFamily::kSquaredErrorMean, 1};

}  // namespace

TEST_CASE("client_update single hand-checked step") {
  RngStream rng(0, "batch", 0);
  const ParamVector w = client_update(kScalar, ParamVector({0.0}),
                                      ParamVector({0.0}),
                                      scalar_points(0, {1.0}), 0.25, 0.0, 1, 0,
                                      rng);
  CHECK(w[0] == doctest::Approx(0.5));  // 0 - 0.25 * (-2)
}

TEST_CASE("client_update with eta = 0 returns the start point") {
  RngStream rng(0, "batch", 0);
  const ParamVector start({0.3});
  CHECK(client_update(kScalar, start, ParamVector({1.0}),
                      scalar_points(0, {5.0}), 0.0, 2.0, 7, 0, rng) == start);
}

TEST_CASE("large lambda contracts toward the broadcast") {
  RngStream rng(0, "batch", 0);
  const TaskDataset data = scalar_points(0, {2.0});
  const double L = smoothness_bound(kScalar, data);
  const double lambda = 10.0 * L;
  const ParamVector start({5.0}), w_tilde({1.0});
  const ParamVector w = client_update(kScalar, start, w_tilde, data,
                                      1.0 / lambda, lambda, 1, 0, rng);
  CHECK(l2_norm(sub(w, w_tilde)) <= l2_norm(sub(start, w_tilde)));
}

TEST_CASE("client_update reports non-finite divergence") {
  RngStream rng(0, "batch", 0);
  CHECK_THROWS_AS(client_update(kScalar, ParamVector({1.0}), ParamVector({0.0}),
                                scalar_points(3, {0.0}), 1e300, 0.0, 3, 0, rng,
                                9),
                  NumericError);
  try {
    client_update(kScalar, ParamVector({1.0}), ParamVector({0.0}),
                  scalar_points(3, {0.0}), 1e300, 0.0, 3, 0, rng, 9);
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("task 3") != std::string::npos);
    CHECK(msg.find("round 9") != std::string::npos);
  }
}

TEST_CASE("mtl_round aggregates hand-set updates") {
  // lambda = 0, E = 1, eta = 0.5, squared error: update = x - w.
  const ModelSpec spec{ModelFamily::kSquaredErrorMean, 2};
  FederationConfig cfg;
  cfg.m = 2;
  cfg.q = 2;
  cfg.eta = 0.5;
  cfg.gamma = 1.0;
  cfg.delta = 0.1;

  TaskDataset t0;
  t0.examples.push_back({{2.0, 0.0}, 0.0});
  TaskDataset t1;
  t1.examples.push_back({{0.0, 0.0}, 0.0});

  std::vector<ClientState> clients = {{0, ParamVector(2), -1},
                                      {1, ParamVector(2), -1}};
  std::vector<RngStream> streams;
  streams.emplace_back(0, "batch", 0);
  streams.emplace_back(0, "batch", 1);
  ServerState server{ParamVector(2), 0, {}};
  server.ledger.delta = 0.1;

  // g0 = [2,0] clips to [1,0]; g1 = [0,0]; mean update = [0.5, 0].
  mtl_round(spec, server, clients, streams, {t0, t1}, cfg);
  CHECK(server.w_tilde[0] == doctest::Approx(0.5));
  CHECK(server.w_tilde[1] == doctest::Approx(0.0));
  CHECK(server.round == 1);
  CHECK(server.ledger.events.empty());  // sigma = 0 spends nothing

  // Identical clipped updates u move the server by exactly u.
  std::vector<ClientState> same = {{0, ParamVector(2), -1},
                                   {1, ParamVector(2), -1}};
  ServerState server2{ParamVector(2), 0, {}};
  server2.ledger.delta = 0.1;
  TaskDataset shared;
  shared.examples.push_back({{0.6, 0.0}, 0.0});
  mtl_round(spec, server2, same, streams, {shared, shared}, cfg);
  CHECK(server2.w_tilde[0] == doctest::Approx(0.6));
  CHECK(same[0].w == same[1].w);
}

TEST_CASE("unselected clients are untouched") {
  FederationConfig cfg = small_config();
  cfg.q = 1;
  cfg.T = 1;
  const SolverOutput out = run_private_mtl(cfg, small_datasets(), kScalar);

  // Recompute the initial models; exactly one task may have moved.
  int moved = 0;
  for (int k = 0; k < cfg.m; ++k) {
    RngStream init(cfg.seed, "init", static_cast<std::uint64_t>(k));
    if (!(out.models[k] == init_params(kScalar, init))) ++moved;
  }
  CHECK(moved == 1);
}

TEST_CASE("trace length and descent on a convex run") {
  FederationConfig cfg = small_config();
  cfg.T = 25;
  const SolverOutput out = run_private_mtl(cfg, small_datasets(), kScalar);
  REQUIRE(out.trace.rounds.size() == 25);
  REQUIRE(out.broadcasts.size() == 25);
  CHECK(out.trace.rounds.back().avg_train_loss <
        out.trace.rounds.front().avg_train_loss);
  for (const auto& r : out.trace.rounds) {
    CHECK(r.epsilon_spent == 0.0);  // sigma = 0
    CHECK(r.per_task_objective.size() == 3);
  }
}

TEST_CASE("same seed is bitwise deterministic") {
  FederationConfig cfg = small_config();
  cfg.sigma = 0.3;
  cfg.batch_size = 1;
  const auto a = run_private_mtl(cfg, small_datasets(), kScalar);
  const auto b = run_private_mtl(cfg, small_datasets(), kScalar);
  REQUIRE(a.models.size() == b.models.size());
  for (std::size_t k = 0; k < a.models.size(); ++k)
    CHECK(a.models[k] == b.models[k]);
  CHECK(a.global == b.global);
  for (std::size_t t = 0; t < a.trace.rounds.size(); ++t)
    CHECK(a.trace.rounds[t].avg_train_loss == b.trace.rounds[t].avg_train_loss);
}

TEST_CASE("lambda = 0, sigma = 0 equals independent local training") {
  FederationConfig cfg = small_config();
  cfg.lambda = 0.0;
  cfg.sigma = 0.0;
  cfg.q = cfg.m;
  const auto datasets = small_datasets();
  const SolverOutput out = run_private_mtl(cfg, datasets, kScalar);

  for (int k = 0; k < cfg.m; ++k) {
    RngStream init(cfg.seed, "init", static_cast<std::uint64_t>(k));
    RngStream batch(cfg.seed, "batch", static_cast<std::uint64_t>(k));
    const ParamVector w =
        client_update(kScalar, init_params(kScalar, init), ParamVector(1),
                      datasets[k], cfg.eta, 0.0, cfg.T * cfg.E, 0, batch);
    CHECK(out.models[k] == w);  // bitwise
  }
}

TEST_CASE("fedprox with mu = 0 is bitwise fedavg") {
  const ModelSpec spec{ModelFamily::kLogisticRegression, 2};
  FederationConfig cfg = small_config();
  cfg.sigma = 0.1;
  SyntheticSpec syn{3, 10, 2, 1.0, 0.0};
  const SplitFederation fed = generate_synthetic(syn, 5);

  const auto avg = run_fedavg_global(cfg, fed.train, spec, true);
  const auto prox = run_fedprox(cfg, fed.train, spec, 0.0, true);
  CHECK(avg.global == prox.global);
  for (std::size_t t = 0; t < avg.trace.rounds.size(); ++t)
    CHECK(avg.trace.rounds[t].avg_train_loss ==
          prox.trace.rounds[t].avg_train_loss);
  CHECK_THROWS_AS(run_fedprox(cfg, fed.train, spec, -1.0, true), ConfigError);
}

TEST_CASE("a growing proximal weight pins locals to the broadcast") {
  // Quadratic task, step size 1/(L + mu): the local fixed point sits at
  // distance O(1/mu) from the broadcast, shrinking monotonically in mu.
  const TaskDataset data = scalar_points(0, {2.0});
  const double L = smoothness_bound(kScalar, data);
  const ParamVector w_tilde({0.0});
  double prev = 1e300;
  for (double mu : {0.0, 10.0, 100.0, 1000.0}) {
    RngStream rng(0, "batch", 0);
    const ParamVector w =
        client_update(kScalar, w_tilde, w_tilde, data, 1.0 / (L + mu), mu, 25,
                      0, rng);
    const double dist = l2_norm(sub(w, w_tilde));
    CHECK(dist < prev);
    prev = dist;
  }
}

TEST_CASE("fedavg with m = 1 equals centralized SGD") {
  const ModelSpec spec{ModelFamily::kLogisticRegression, 2};
  FederationConfig cfg;
  cfg.m = 1;
  cfg.q = 1;
  cfg.T = 3;
  cfg.E = 2;
  cfg.eta = 0.05;
  cfg.gamma = 1e9;  // no clipping
  cfg.delta = 0.1;
  cfg.seed = 8;
  SyntheticSpec syn{1, 12, 2, 0.0, 0.0};
  const SplitFederation fed = generate_synthetic(syn, 8);

  const auto out = run_fedavg_global(cfg, fed.train, spec, false);
  RngStream init(cfg.seed, "init", 0);
  RngStream batch(cfg.seed, "batch", 0);
  const ParamVector w =
      client_update(spec, init_params(spec, init), ParamVector(spec.dim()),
                    fed.train[0], cfg.eta, 0.0, cfg.T * cfg.E, 0, batch);
  CHECK(l2_norm(sub(out.global, w)) < 1e-9);
}

TEST_CASE("non-private fedavg spends nothing") {
  const ModelSpec spec{ModelFamily::kLogisticRegression, 2};
  FederationConfig cfg = small_config();
  cfg.sigma = 0.4;  // ignored when is_private = false
  SyntheticSpec syn{3, 10, 2, 1.0, 0.0};
  const SplitFederation fed = generate_synthetic(syn, 5);
  const auto out = run_fedavg_global(cfg, fed.train, spec, false);
  CHECK(out.sigma_used == 0.0);
  for (const auto& r : out.trace.rounds) CHECK(r.epsilon_spent == 0.0);
}

TEST_CASE("homogeneous federation: fedavg matches pmtl under identical init") {
  const ModelSpec spec{ModelFamily::kLogisticRegression, 2};
  FederationConfig cfg = small_config();
  cfg.identical_init = true;
  cfg.lambda = 0.5;
  cfg.T = 10;
  cfg.E = 1;        // with one local step the regularizer vanishes at w = w_tilde
  cfg.gamma = 1e9;  // keep client models and the broadcast in lockstep
  SyntheticSpec one{1, 20, 2, 0.0, 0.0};
  const SplitFederation fed = generate_synthetic(one, 9);
  const std::vector<TaskDataset> datasets = {fed.train[0], fed.train[0],
                                             fed.train[0]};

  const auto pmtl = run_private_mtl(cfg, datasets, spec);
  const auto avg = run_fedavg_global(cfg, datasets, spec, false);
  const double pmtl_loss = empirical_loss(spec, pmtl.models[0], datasets[0]);
  const double avg_loss = empirical_loss(spec, avg.global, datasets[0]);
  CHECK(std::fabs(pmtl_loss - avg_loss) < 1e-3);
}

TEST_CASE("naive DP MTL noises every block, including the owner's") {
  FederationConfig cfg = small_config();
  cfg.sigma = 0.5;
  const auto datasets = small_datasets();
  const auto noisy = run_naive_dp_mtl(cfg, datasets, kScalar);
  FederationConfig clean = cfg;
  clean.sigma = 0.0;
  const auto noiseless = run_naive_dp_mtl(clean, datasets, kScalar);
  for (int k = 0; k < cfg.m; ++k)
    CHECK_FALSE(noisy.models[k] == noiseless.models[k]);
  CHECK(noisy.trace.rounds.back().epsilon_spent > 0.0);
}

TEST_CASE("naive DP MTL with sigma = 0 and lambda = 0 is local training") {
  FederationConfig cfg = small_config();
  cfg.lambda = 0.0;
  cfg.sigma = 0.0;
  const auto datasets = small_datasets();
  const auto naive = run_naive_dp_mtl(cfg, datasets, kScalar);
  for (int k = 0; k < cfg.m; ++k) {
    RngStream init(cfg.seed, "init", static_cast<std::uint64_t>(k));
    RngStream batch(cfg.seed, "batch", static_cast<std::uint64_t>(k));
    const ParamVector w =
        client_update(kScalar, init_params(kScalar, init), ParamVector(1),
                      datasets[k], cfg.eta, 0.0, cfg.T * cfg.E, 0, batch);
    CHECK(naive.models[k] == w);
  }
}

TEST_CASE("naive DP MTL calibration loses the 1/m averaging") {
  FederationConfig cfg = small_config();
  cfg.m = 100;
  cfg.q = 100;
  cfg.T = 10;
  cfg.delta = 0.0;  // defaults to 1/m
  cfg.epsilon_target = 1.0;
  SyntheticSpec syn{100, 4, 1, 0.0, 0.0};
  const ModelSpec spec{ModelFamily::kLogisticRegression, 1};
  const SplitFederation fed = generate_synthetic(syn, 2);

  FederationConfig short_run = cfg;
  short_run.T = 1;  // keep it cheap; sigma depends only on the config
  const auto naive = run_naive_dp_mtl(short_run, fed.train, spec);
  const auto pmtl = run_private_mtl(short_run, fed.train, spec);
  CHECK(naive.sigma_used == doctest::Approx(100.0 * pmtl.sigma_used));
}

TEST_CASE("finetuning variants") {
  const TaskDataset data = scalar_points(0, {1.0, 3.0});
  const ParamVector start({0.0});

  CHECK(finetune(kScalar, start, data, FinetuneMethod::kVanilla, 5, 0.0, 0.0) ==
        start);
  CHECK_THROWS_AS(
      finetune(kScalar, start, data, FinetuneMethod::kVanilla, 0, 0.1, 0.0),
      ConfigError);

  // Vanilla finetuning on a strongly convex task reaches the sample mean.
  const ParamVector w = finetune(kScalar, start, data, FinetuneMethod::kVanilla,
                                 200, 0.1, 0.0);
  CHECK(std::fabs(w[0] - 2.0) < 1e-6);

  // A huge anchor keeps mean-regularized finetuning at the start point.
  const double lambda = 1e6;
  const ParamVector pinned = finetune(kScalar, start, data,
                                      FinetuneMethod::kMeanReg, 50,
                                      1.0 / (lambda + 4.0), lambda);
  const double grad_norm = l2_norm(empirical_grad(kScalar, start, data));
  CHECK(l2_norm(sub(pinned, start)) <= grad_norm / (lambda + 4.0) * 2.0);
}

TEST_CASE("evaluate broadcasts a single model or pairs per task") {
  const ModelSpec spec{ModelFamily::kLogisticRegression, 1};
  TaskDataset t0;
  t0.examples = {{{1.0}, 1.0}, {{-1.0}, 0.0}};
  TaskDataset t1;
  t1.examples = {{{1.0}, 0.0}, {{-1.0}, 1.0}};  // inverted labels

  const ParamVector good({5.0, 0.0});
  const auto broadcast = evaluate(spec, {good}, {t0, t1});
  REQUIRE(broadcast.size() == 2);
  CHECK(*broadcast[0].accuracy == doctest::Approx(1.0));
  CHECK(*broadcast[1].accuracy == doctest::Approx(0.0));
  CHECK(mean_accuracy(broadcast) == doctest::Approx(0.5));

  const ParamVector bad({-5.0, 0.0});
  const auto paired = evaluate(spec, {good, bad}, {t0, t1});
  CHECK(*paired[0].accuracy == doctest::Approx(1.0));
  CHECK(*paired[1].accuracy == doctest::Approx(1.0));

  CHECK_THROWS_AS(evaluate(spec, {good, bad, good}, {t0, t1}), ConfigError);
}

TEST_CASE("sensitivity probe basics") {
  FederationConfig cfg;
  cfg.m = 4;
  cfg.q = 4;
  cfg.eta = 0.5;
  cfg.gamma = 0.3;
  cfg.delta = 0.1;
  std::vector<TaskDataset> base;
  for (int k = 0; k < 4; ++k) base.push_back(scalar_points(k, {0.0}));

  CHECK(empirical_sensitivity_probe(cfg, kScalar, base, base, 5) ==
        doctest::Approx(0.0));

  std::vector<TaskDataset> other = base;
  other[2].examples[0].features[0] = 100.0;
  const double probe = empirical_sensitivity_probe(cfg, kScalar, base, other, 20);
  CHECK(probe > 0.0);
  CHECK(probe <= 2.0 * cfg.gamma / cfg.m + 1e-9);

  std::vector<TaskDataset> two = other;
  two[3].examples[0].features[0] = -7.0;
  CHECK_THROWS_AS(empirical_sensitivity_probe(cfg, kScalar, base, two, 5),
                  ConfigError);
}

TEST_CASE("the broadcast is the only cross-client dataflow") {
  // Replay one client's trajectory from nothing but its own dataset, its
  // own rng streams, and the recorded broadcast sequence; with q = m it
  // must reproduce the solver's model bitwise.
  const ModelSpec spec{ModelFamily::kLogisticRegression, 2};
  FederationConfig cfg = small_config();
  cfg.sigma = 0.2;
  cfg.batch_size = 3;
  cfg.T = 6;
  SyntheticSpec syn{3, 10, 2, 1.5, 0.0};
  const SplitFederation fed = generate_synthetic(syn, 31);

  const SolverOutput out = run_private_mtl(cfg, fed.train, spec);
  REQUIRE(out.broadcasts.size() == static_cast<std::size_t>(cfg.T));
  for (int k = 0; k < cfg.m; ++k) {
    RngStream init(cfg.seed, "init", static_cast<std::uint64_t>(k));
    RngStream batch(cfg.seed, "batch", static_cast<std::uint64_t>(k));
    ParamVector w = init_params(spec, init);
    for (int t = 0; t < cfg.T; ++t)
      w = client_update(spec, w, out.broadcasts[t], fed.train[k], cfg.eta,
                        cfg.lambda, cfg.E, cfg.batch_size, batch, t);
    CHECK(out.models[k] == w);
  }
}
