#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "privmtl/objectives.hpp"
#include "privmtl/oracles.hpp"
#include "privmtl/rng.hpp"

using namespace privmtl;

namespace {

TaskDataset scalar_points(std::vector<double> xs) {
  TaskDataset d;
  for (double x : xs) d.examples.push_back({{x}, 0.0});
  return d;
}

TaskDataset random_task(const ModelSpec& spec, int n, RngStream& rng) {
  TaskDataset d;
  for (int i = 0; i < n; ++i) {
    Example ex;
    for (int j = 0; j < spec.feature_width; ++j)
      ex.features.push_back(rng.next_uniform(-1.5, 1.5));
    switch (spec.family) {
      case ModelFamily::kSquaredErrorMean:
        ex.label = 0.0;
        break;
      case ModelFamily::kLinearRegression:
        ex.label = rng.next_uniform(-2.0, 2.0);
        break;
      default:
        ex.label = rng.next_below(2) ? 1.0 : 0.0;
    }
    d.examples.push_back(std::move(ex));
  }
  return d;
}

ParamVector random_params(const ModelSpec& spec, RngStream& rng) {
  ParamVector w(spec.dim());
  for (std::size_t i = 0; i < w.dim(); ++i) w[i] = rng.next_uniform(-0.8, 0.8);
  return w;
}

double max_rel_err(const ParamVector& got, const ParamVector& want) {
  double worst = 0.0;
  const double scale = std::max(1.0, l2_norm(want));
  for (std::size_t i = 0; i < got.dim(); ++i)
    worst = std::max(worst, std::fabs(got[i] - want[i]) / scale);
  return worst;
}

}  // namespace

TEST_CASE("model dimensions") {
  ModelSpec sq{ModelFamily::kSquaredErrorMean, 3};
  CHECK(sq.dim() == 3);
  ModelSpec lin{ModelFamily::kLinearRegression, 3};
  CHECK(lin.dim() == 4);
  ModelSpec logit{ModelFamily::kLogisticRegression, 5};
  CHECK(logit.dim() == 6);
  ModelSpec mlp{ModelFamily::kMlp1Hidden, 5, 8};
  CHECK(mlp.dim() == 8 * 7 + 1);
  CHECK(mlp.classifier());
  CHECK_FALSE(mlp.convex());
  CHECK_FALSE(sq.classifier());
}

TEST_CASE("family name round trip") {
  for (auto f : {ModelFamily::kSquaredErrorMean, ModelFamily::kLinearRegression,
                 ModelFamily::kLogisticRegression, ModelFamily::kMlp1Hidden})
    CHECK(model_family_from_string(to_string(f)) == f);
  CHECK_THROWS_AS(model_family_from_string("resnet"), ConfigError);
}

TEST_CASE("squared-error losses by hand") {
  const ModelSpec spec{ModelFamily::kSquaredErrorMean, 1};
  CHECK(empirical_loss(spec, ParamVector({2.0}), scalar_points({2.0, 2.0})) ==
        doctest::Approx(0.0));
  CHECK(empirical_loss(spec, ParamVector({0.0}), scalar_points({1.0, 2.0})) ==
        doctest::Approx(5.0));
}

TEST_CASE("logistic loss at w = 0 is n ln 2") {
  const ModelSpec spec{ModelFamily::kLogisticRegression, 3};
  RngStream rng(4, "data", 0);
  const TaskDataset data = random_task(spec, 17, rng);
  CHECK(empirical_loss(spec, ParamVector(4), data) ==
        doctest::Approx(17.0 * std::log(2.0)));
}

TEST_CASE("squared-error gradient by hand") {
  const ModelSpec spec{ModelFamily::kSquaredErrorMean, 1};
  const ParamVector g =
      empirical_grad(spec, ParamVector({0.0}), scalar_points({1.0}));
  CHECK(g[0] == doctest::Approx(-2.0));
}

TEST_CASE("logistic gradient saturates on separated data") {
  const ModelSpec spec{ModelFamily::kLogisticRegression, 1};
  TaskDataset data;
  data.examples.push_back({{1.0}, 1.0});
  data.examples.push_back({{-1.0}, 0.0});
  // margin 1 at unit weight; scale the weight so ||w|| * margin = 40
  const ParamVector w({40.0, 0.0});
  CHECK(l2_norm(empirical_grad(spec, w, data)) < 1e-6);
}

TEST_CASE("gradients match finite differences for every family") {
  RngStream rng(7, "fd", 0);
  const std::vector<ModelSpec> specs = {
      {ModelFamily::kSquaredErrorMean, 4},
      {ModelFamily::kLinearRegression, 4},
      {ModelFamily::kLogisticRegression, 4},
      {ModelFamily::kMlp1Hidden, 3, 5},
  };
  for (const auto& spec : specs) {
    const TaskDataset data = random_task(spec, 6, rng);
    for (int trial = 0; trial < 20; ++trial) {
      const ParamVector w = random_params(spec, rng);
      const ParamVector analytic = empirical_grad(spec, w, data);
      const ParamVector numeric = finite_diff_grad(
          [&](const ParamVector& p) { return empirical_loss(spec, p, data); },
          w);
      CHECK(max_rel_err(analytic, numeric) <= 1e-5);
    }
  }
}

TEST_CASE("batch gradient rescaling") {
  const ModelSpec spec{ModelFamily::kLogisticRegression, 2};
  RngStream rng(9, "batch", 0);
  const TaskDataset data = random_task(spec, 8, rng);
  const ParamVector w = random_params(spec, rng);

  // The full index set reproduces the exact gradient.
  std::vector<int> all(8);
  for (int i = 0; i < 8; ++i) all[i] = i;
  const ParamVector g_full = empirical_grad(spec, w, data);
  const ParamVector g_all = empirical_grad(spec, w, data, &all);
  CHECK(max_rel_err(g_all, g_full) < 1e-12);

  // A half batch is rescaled by n/|batch| = 2.
  std::vector<int> half = {0, 1, 2, 3};
  TaskDataset front;
  for (int i : half) front.examples.push_back(data.examples[i]);
  const ParamVector g_half = empirical_grad(spec, w, data, &half);
  const ParamVector g_front = empirical_grad(spec, w, front);
  CHECK(max_rel_err(g_half, scale(g_front, 2.0)) < 1e-12);

  std::vector<int> empty;
  CHECK_THROWS_AS(empirical_grad(spec, w, data, &empty), ConfigError);
}

TEST_CASE("local objective identities") {
  const ModelSpec spec{ModelFamily::kSquaredErrorMean, 1};
  const TaskDataset data = scalar_points({1.0});
  const ParamVector w({1.0}), w_tilde({0.0});

  // lambda = 0 and w = w_tilde both reduce to the plain loss.
  CHECK(local_objective(spec, w, w_tilde, data, 0.0) ==
        doctest::Approx(empirical_loss(spec, w, data)));
  CHECK(local_objective(spec, w, w, data, 3.0) ==
        doctest::Approx(empirical_loss(spec, w, data)));

  // lambda = 2, w = [1], w_tilde = [0], data = {1}: 2/2 * 1 + 0 = 1.
  CHECK(local_objective(spec, w, w_tilde, data, 2.0) == doctest::Approx(1.0));
}

TEST_CASE("local objective gradient identities") {
  const ModelSpec spec{ModelFamily::kLogisticRegression, 3};
  RngStream rng(12, "lo", 0);
  const TaskDataset data = random_task(spec, 5, rng);
  const ParamVector w = random_params(spec, rng);
  const ParamVector w_tilde = random_params(spec, rng);

  CHECK(local_objective_grad(spec, w, w_tilde, data, 0.0) ==
        empirical_grad(spec, w, data));

  // At a zero-loss point only the regularizer remains.
  const ModelSpec sq{ModelFamily::kSquaredErrorMean, 1};
  const TaskDataset pt = scalar_points({2.0});
  const ParamVector g = local_objective_grad(sq, ParamVector({2.0}),
                                             ParamVector({0.5}), pt, 3.0);
  CHECK(g[0] == doctest::Approx(3.0 * 1.5));

  // Full finite-difference check of the regularized gradient.
  const double lambda = 1.7;
  const ParamVector analytic = local_objective_grad(spec, w, w_tilde, data, lambda);
  const ParamVector numeric = finite_diff_grad(
      [&](const ParamVector& p) {
        return local_objective(spec, p, w_tilde, data, lambda);
      },
      w);
  CHECK(max_rel_err(analytic, numeric) <= 1e-5);
}

TEST_CASE("curvature bounds") {
  const ModelSpec sq{ModelFamily::kSquaredErrorMean, 2};
  TaskDataset d;
  d.examples = {{{1.0, 0.0}, 0.0}, {{0.0, 1.0}, 0.0}, {{1.0, 1.0}, 0.0}};
  CHECK(smoothness_bound(sq, d) == doctest::Approx(6.0));
  CHECK(strong_convexity_bound(sq, d) == doctest::Approx(6.0));

  const ModelSpec logit{ModelFamily::kLogisticRegression, 2};
  CHECK(smoothness_bound(logit, d) == doctest::Approx(0.25 * (1.0 + 1.0 + 2.0 + 3.0)));
  CHECK(strong_convexity_bound(logit, d) == doctest::Approx(0.0));

  const ModelSpec mlp{ModelFamily::kMlp1Hidden, 2, 4};
  CHECK_THROWS_AS(smoothness_bound(mlp, d), ConfigError);
}

TEST_CASE("init is deterministic; mlp biases start at zero") {
  const ModelSpec spec{ModelFamily::kMlp1Hidden, 3, 4};
  RngStream a(13, "init", 2), b(13, "init", 2);
  const ParamVector w1 = init_params(spec, a), w2 = init_params(spec, b);
  CHECK(w1 == w2);
  const int p = 3, h = 4;
  for (int j = 0; j < h; ++j) CHECK(w1[h * p + j] == 0.0);  // b1
  CHECK(w1[h * p + 2 * h] == 0.0);                          // b2
  const double bound = std::sqrt(6.0 / (p + h));
  for (int i = 0; i < h * p; ++i) CHECK(std::fabs(w1[i]) <= bound);
}

TEST_CASE("accuracy") {
  const ModelSpec spec{ModelFamily::kLogisticRegression, 1};
  TaskDataset d;
  d.examples = {{{1.0}, 1.0}, {{-1.0}, 0.0}, {{2.0}, 1.0}, {{-2.0}, 0.0}};
  // Perfect classifier.
  CHECK(accuracy(spec, ParamVector({5.0, 0.0}), d) == doctest::Approx(1.0));
  // Constant predictor on a balanced task.
  CHECK(accuracy(spec, ParamVector({0.0, 9.0}), d) == doctest::Approx(0.5));

  // Hand-enumerated 3-example task: w = [1, -0.5] predicts 1 iff x > 0.5.
  TaskDataset three;
  three.examples = {{{1.0}, 1.0}, {{0.2}, 1.0}, {{-1.0}, 0.0}};
  CHECK(accuracy(spec, ParamVector({1.0, -0.5}), three) ==
        doctest::Approx(2.0 / 3.0));

  const ModelSpec sq{ModelFamily::kSquaredErrorMean, 1};
  CHECK_THROWS_AS(accuracy(sq, ParamVector({0.0}), three), ConfigError);
}

TEST_CASE("dimension validation in objective calls") {
  const ModelSpec spec{ModelFamily::kLogisticRegression, 3};
  RngStream rng(1, "d", 0);
  const TaskDataset data = random_task(spec, 3, rng);
  CHECK_THROWS_AS(empirical_loss(spec, ParamVector(3), data), DimensionError);
  const ModelSpec narrow{ModelFamily::kLogisticRegression, 2};
  CHECK_THROWS_AS(empirical_loss(narrow, ParamVector(3), data), DimensionError);
}
