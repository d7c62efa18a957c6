#include "privmtl/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace privmtl {
namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Numerically stable cross-entropy of a logit z against label y.
// -[y log s(z) + (1-y) log(1 - s(z))] = log(1 + e^{-z}) + (1-y) z
double logit_xent(double z, double y) {
  const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z))
                                  : std::log1p(std::exp(z));
  return softplus - y * z;
}

double affine(const ParamVector& w, const std::vector<double>& x) {
  double z = w[w.dim() - 1];  // bias
  for (std::size_t i = 0; i < x.size(); ++i) z += w[i] * x[i];
  return z;
}

// Parameter layout for the one-hidden-layer mlp:
//   [ W1 (hidden x p, row-major) | b1 (hidden) | w2 (hidden) | b2 ]
struct MlpView {
  const double* w1;
  const double* b1;
  const double* w2;
  double b2;
  int p, h;
};

MlpView mlp_view(const ModelSpec& spec, const ParamVector& w) {
  const int p = spec.feature_width, h = spec.hidden_width;
  const double* base = w.values().data();
  return {base, base + h * p, base + h * p + h, base[h * p + 2 * h], p, h};
}

double mlp_logit(const MlpView& v, const std::vector<double>& x,
                 std::vector<double>* hidden_out = nullptr) {
  double z = v.b2;
  for (int j = 0; j < v.h; ++j) {
    double a = v.b1[j];
    for (int i = 0; i < v.p; ++i) a += v.w1[j * v.p + i] * x[i];
    const double hj = std::tanh(a);
    if (hidden_out) (*hidden_out)[j] = hj;
    z += v.w2[j] * hj;
  }
  return z;
}

double example_loss(const ModelSpec& spec, const ParamVector& w,
                    const Example& ex) {
  switch (spec.family) {
    case ModelFamily::kSquaredErrorMean: {
      double s = 0.0;
      for (std::size_t i = 0; i < ex.features.size(); ++i) {
        const double r = ex.features[i] - w[i];
        s += r * r;
      }
      return s;
    }
    case ModelFamily::kLinearRegression: {
      const double r = affine(w, ex.features) - ex.label;
      return r * r;
    }
    case ModelFamily::kLogisticRegression:
      return logit_xent(affine(w, ex.features), ex.label);
    case ModelFamily::kMlp1Hidden:
      return logit_xent(mlp_logit(mlp_view(spec, w), ex.features), ex.label);
  }
  return 0.0;
}

void accumulate_example_grad(const ModelSpec& spec, const ParamVector& w,
                             const Example& ex, ParamVector& g) {
  switch (spec.family) {
    case ModelFamily::kSquaredErrorMean:
      for (std::size_t i = 0; i < ex.features.size(); ++i)
        g[i] += 2.0 * (w[i] - ex.features[i]);
      return;
    case ModelFamily::kLinearRegression: {
      const double c = 2.0 * (affine(w, ex.features) - ex.label);
      for (std::size_t i = 0; i < ex.features.size(); ++i)
        g[i] += c * ex.features[i];
      g[g.dim() - 1] += c;
      return;
    }
    case ModelFamily::kLogisticRegression: {
      const double c = sigmoid(affine(w, ex.features)) - ex.label;
      for (std::size_t i = 0; i < ex.features.size(); ++i)
        g[i] += c * ex.features[i];
      g[g.dim() - 1] += c;
      return;
    }
    case ModelFamily::kMlp1Hidden: {
      const MlpView v = mlp_view(spec, w);
      std::vector<double> hidden(v.h);
      const double z = mlp_logit(v, ex.features, &hidden);
      const double dz = sigmoid(z) - ex.label;
      double* gw1 = g.values().data();
      double* gb1 = gw1 + v.h * v.p;
      double* gw2 = gw1 + v.h * v.p + v.h;
      double& gb2 = gw1[v.h * v.p + 2 * v.h];
      gb2 += dz;
      for (int j = 0; j < v.h; ++j) {
        gw2[j] += dz * hidden[j];
        const double da = dz * v.w2[j] * (1.0 - hidden[j] * hidden[j]);
        gb1[j] += da;
        for (int i = 0; i < v.p; ++i) gw1[j * v.p + i] += da * ex.features[i];
      }
      return;
    }
  }
}

void require_dims(const ModelSpec& spec, const ParamVector& w,
                  const TaskDataset& data) {
  if (static_cast<int>(w.dim()) != spec.dim())
    throw DimensionError("parameter dimension " + std::to_string(w.dim()) +
                         " does not match model dimension " +
                         std::to_string(spec.dim()));
  if (!data.examples.empty() &&
      static_cast<int>(data.feature_width()) != spec.feature_width)
    throw DimensionError("feature width " +
                         std::to_string(data.feature_width()) +
                         " does not match model feature width " +
                         std::to_string(spec.feature_width));
}

}  // namespace

ModelFamily model_family_from_string(const std::string& s) {
  if (s == "squared_error_mean") return ModelFamily::kSquaredErrorMean;
  if (s == "linear_regression") return ModelFamily::kLinearRegression;
  if (s == "logistic_regression") return ModelFamily::kLogisticRegression;
  if (s == "mlp_1hidden") return ModelFamily::kMlp1Hidden;
  throw ConfigError("unknown model family: " + s);
}

std::string to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::kSquaredErrorMean: return "squared_error_mean";
    case ModelFamily::kLinearRegression: return "linear_regression";
    case ModelFamily::kLogisticRegression: return "logistic_regression";
    case ModelFamily::kMlp1Hidden: return "mlp_1hidden";
  }
  return "?";
}

double empirical_loss(const ModelSpec& spec, const ParamVector& w,
                      const TaskDataset& data) {
  require_dims(spec, w, data);
  double s = 0.0;
  for (const auto& ex : data.examples) s += example_loss(spec, w, ex);
  return s;
}

ParamVector empirical_grad(const ModelSpec& spec, const ParamVector& w,
                           const TaskDataset& data,
                           const std::vector<int>* batch) {
  require_dims(spec, w, data);
  ParamVector g(w.dim());
  if (batch == nullptr) {
    for (const auto& ex : data.examples) accumulate_example_grad(spec, w, ex, g);
    return g;
  }
  if (batch->empty()) throw ConfigError("empty batch");
  for (int i : *batch) accumulate_example_grad(spec, w, data.examples.at(i), g);
  const double rescale =
      static_cast<double>(data.size()) / static_cast<double>(batch->size());
  return scale(g, rescale);
}

double local_objective(const ModelSpec& spec, const ParamVector& w,
                       const ParamVector& w_tilde, const TaskDataset& data,
                       double lambda) {
  require_same_dim(w, w_tilde);
  const ParamVector diff = sub(w, w_tilde);
  return 0.5 * lambda * dot(diff, diff) + empirical_loss(spec, w, data);
}

ParamVector local_objective_grad(const ModelSpec& spec, const ParamVector& w,
                                 const ParamVector& w_tilde,
                                 const TaskDataset& data, double lambda,
                                 const std::vector<int>* batch) {
  ParamVector g = empirical_grad(spec, w, data, batch);
  require_same_dim(w, w_tilde);
  for (std::size_t i = 0; i < w.dim(); ++i) g[i] += lambda * (w[i] - w_tilde[i]);
  return g;
}

double smoothness_bound(const ModelSpec& spec, const TaskDataset& data) {
  switch (spec.family) {
    case ModelFamily::kSquaredErrorMean:
      return 2.0 * static_cast<double>(data.size());
    case ModelFamily::kLinearRegression:
    case ModelFamily::kLogisticRegression: {
      // trace of sum_i x~_i x~_i^T bounds the top eigenvalue
      double tr = 0.0;
      for (const auto& ex : data.examples) {
        for (double x : ex.features) tr += x * x;
        tr += 1.0;  // bias coordinate
      }
      return spec.family == ModelFamily::kLinearRegression ? 2.0 * tr
                                                           : 0.25 * tr;
    }
    case ModelFamily::kMlp1Hidden:
      throw ConfigError("smoothness constant unknown for mlp_1hidden");
  }
  return 0.0;
}

double strong_convexity_bound(const ModelSpec& spec, const TaskDataset& data) {
  if (spec.family == ModelFamily::kSquaredErrorMean)
    return 2.0 * static_cast<double>(data.size());
  return 0.0;
}

ParamVector init_params(const ModelSpec& spec, RngStream& rng) {
  ParamVector w(spec.dim());
  if (spec.family == ModelFamily::kMlp1Hidden) {
    const int p = spec.feature_width, h = spec.hidden_width;
    const double a1 = std::sqrt(6.0 / (p + h));
    const double a2 = std::sqrt(6.0 / (h + 1));
    for (int i = 0; i < h * p; ++i) w[i] = rng.next_uniform(-a1, a1);
    for (int i = 0; i < h; ++i) w[h * p + h + i] = rng.next_uniform(-a2, a2);
    // b1, b2 start at zero
    return w;
  }
  for (std::size_t i = 0; i < w.dim(); ++i) w[i] = rng.next_uniform(-0.5, 0.5);
  return w;
}

double accuracy(const ModelSpec& spec, const ParamVector& w,
                const TaskDataset& data) {
  require_dims(spec, w, data);
  if (!spec.classifier())
    throw ConfigError("accuracy is only defined for classifiers");
  if (data.examples.empty()) throw ConfigError("accuracy of empty dataset");
  int correct = 0;
  for (const auto& ex : data.examples) {
    const double z = spec.family == ModelFamily::kLogisticRegression
                         ? affine(w, ex.features)
                         : mlp_logit(mlp_view(spec, w), ex.features);
    const int pred = z > 0.0 ? 1 : 0;
    if (pred == static_cast<int>(ex.label + 0.5)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace privmtl
