#include "privmtl/oracles.hpp"

#include <cmath>
#include <numeric>

namespace privmtl {

std::vector<TaskDataset> QuadraticInstance::to_datasets() const {
  std::vector<TaskDataset> out;
  out.reserve(task_points.size());
  for (std::size_t k = 0; k < task_points.size(); ++k) {
    TaskDataset d;
    d.task_id = static_cast<int>(k);
    for (const auto& x : task_points[k]) d.examples.push_back({x.values(), 0.0});
    out.push_back(std::move(d));
  }
  return out;
}

double QuadraticInstance::objective(const std::vector<ParamVector>& models) const {
  if (static_cast<int>(models.size()) != m())
    throw DimensionError("objective: expected one model per task");
  ParamVector w_bar(models.front().dim());
  for (const auto& w : models) add_in_place(w_bar, w);
  w_bar = scale(w_bar, 1.0 / m());
  double total = 0.0;
  for (int k = 0; k < m(); ++k) {
    const ParamVector diff = sub(models[k], w_bar);
    total += 0.5 * lambda * dot(diff, diff);
    for (const auto& x : task_points[k]) {
      const ParamVector r = sub(x, models[k]);
      total += dot(r, r);
    }
  }
  return total / m();
}

std::vector<double> solve_linear_system(std::vector<std::vector<double>> a,
                                        std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    if (std::fabs(a[pivot][col]) < 1e-300)
      throw NumericError("singular linear system");
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t ri = n; ri-- > 0;) {
    double s = b[ri];
    for (std::size_t c = ri + 1; c < n; ++c) s -= a[ri][c] * x[c];
    x[ri] = s / a[ri][ri];
  }
  return x;
}

FixedPoint mean_reg_fixed_point(const QuadraticInstance& instance) {
  const int m = instance.m();
  const int d = instance.dim();
  const int n = m * d;
  // Stationarity of task k: (2 n_k + lambda) w_k - (lambda/m) sum_j w_j = 2 sum_i x_{k,i}
  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
  std::vector<double> b(n, 0.0);
  for (int k = 0; k < m; ++k) {
    const auto& points = instance.task_points[k];
    const double nk = static_cast<double>(points.size());
    for (int c = 0; c < d; ++c) {
      const int row = k * d + c;
      a[row][row] += 2.0 * nk + instance.lambda;
      for (int j = 0; j < m; ++j)
        a[row][j * d + c] -= instance.lambda / m;
      for (const auto& x : points) b[row] += 2.0 * x[c];
    }
  }
  const std::vector<double> x = solve_linear_system(std::move(a), std::move(b));
  FixedPoint fp;
  fp.mean = ParamVector(d);
  for (int k = 0; k < m; ++k) {
    ParamVector w(d);
    for (int c = 0; c < d; ++c) w[c] = x[k * d + c];
    add_in_place(fp.mean, w);
    fp.models.push_back(std::move(w));
  }
  fp.mean = scale(fp.mean, 1.0 / m);
  return fp;
}

ParamVector finite_diff_grad(const std::function<double(const ParamVector&)>& fn,
                             const ParamVector& w, double step) {
  ParamVector g(w.dim());
  ParamVector probe = w;
  for (std::size_t i = 0; i < w.dim(); ++i) {
    const double orig = w[i];
    probe[i] = orig + step;
    const double up = fn(probe);
    probe[i] = orig - step;
    const double down = fn(probe);
    probe[i] = orig;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

std::vector<ParamVector> exhaustive_small_mtl(
    const FederationConfig& config, const std::vector<TaskDataset>& datasets,
    const ModelSpec& spec) {
  config.validate();
  if (config.m > 3 || config.sigma != 0.0 || config.batch_size != 0 ||
      spec.family != ModelFamily::kSquaredErrorMean || spec.feature_width != 1)
    throw ConfigError("exhaustive replay covers tiny scalar noise-free runs only");

  // Everything below is explicit scalar arithmetic, kept step-for-step in
  // the same evaluation order as the production solver so results can be
  // diffed bitwise.
  std::vector<double> w(config.m);
  std::vector<int> last_sel(config.m, -1);
  for (int k = 0; k < config.m; ++k) {
    RngStream init(config.seed, "init",
                   config.identical_init ? 0 : static_cast<std::uint64_t>(k));
    w[k] = init.next_uniform(-0.5, 0.5);
  }
  double w_tilde = 0.0;
  for (int k = 0; k < config.m; ++k) w_tilde += w[k];
  w_tilde *= 1.0 / config.m;

  for (int t = 0; t < config.T; ++t) {
    RngStream samp(config.seed, "sampling", static_cast<std::uint64_t>(t));
    std::vector<int> idx(config.m);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < config.q; ++i) {
      const int j = i + static_cast<int>(samp.next_below(config.m - i));
      std::swap(idx[i], idx[j]);
    }
    std::vector<int> sel(idx.begin(), idx.begin() + config.q);
    std::sort(sel.begin(), sel.end());

    double acc = 0.0;
    std::vector<double> w_new(sel.size());
    for (std::size_t i = 0; i < sel.size(); ++i) {
      const int k = sel[i];
      double wk = w[k];
      for (int step = 0; step < config.E; ++step) {
        double g = 0.0;
        for (const auto& ex : datasets[k].examples)
          g += 2.0 * (wk - ex.features[0]);
        g += config.lambda * (wk - w_tilde);
        wk += -config.eta * g;
      }
      w_new[i] = wk;
      double upd = wk - w[k];
      const double norm = std::sqrt(upd * upd);
      if (norm > config.gamma) upd *= config.gamma / norm;
      acc += upd;
    }
    w_tilde = w_tilde + acc * (1.0 / config.q);
    for (std::size_t i = 0; i < sel.size(); ++i) {
      w[sel[i]] = w_new[i];
      last_sel[sel[i]] = t;
    }
  }

  std::vector<ParamVector> out;
  for (int k = 0; k < config.m; ++k)
    out.push_back(ParamVector(std::vector<double>{w[k]}));
  return out;
}

}  // namespace privmtl
