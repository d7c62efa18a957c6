#include "privmtl/privacy.hpp"

#include <algorithm>
#include <cmath>

namespace privmtl {
namespace {

double log_binom(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double log_sum_exp(const std::vector<double>& terms) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double t : terms) hi = std::max(hi, t);
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - hi);
  return hi + std::log(s);
}

bool is_integer_order(double alpha) {
  return alpha == std::floor(alpha) && alpha >= 2.0;
}

double rdp_event(double alpha, const MechanismEvent& ev, double delta_rel) {
  if (ev.sampling_rate < 1.0) {
    if (!is_integer_order(alpha)) return kEpsilonInfinite;
    return rdp_subsampled_gaussian(static_cast<int>(alpha),
                                   ev.noise_multiplier, ev.sampling_rate,
                                   delta_rel);
  }
  return rdp_gaussian(alpha, ev.noise_multiplier, delta_rel);
}

}  // namespace

ParamVector clip(const ParamVector& g, double gamma) {
  if (gamma <= 0.0) throw ConfigError("clip bound gamma must be > 0");
  const double norm = l2_norm(g);
  // The relative slack keeps clip exactly idempotent: a rescaled vector's
  // recomputed norm can land a few ulps above gamma.
  if (norm <= gamma * (1.0 + 1e-12)) return g;
  return scale(g, gamma / norm);
}

ParamVector gaussian_mechanism(const ParamVector& mean_update, double sigma,
                               RngStream& rng) {
  if (sigma < 0.0) throw ConfigError("sigma must be >= 0");
  if (sigma == 0.0) return mean_update;
  ParamVector out = mean_update;
  for (std::size_t i = 0; i < out.dim(); ++i)
    out[i] += sigma * rng.next_gaussian();
  return out;
}

double rdp_gaussian(double alpha, double z, double delta_rel) {
  if (alpha <= 1.0) throw ConfigError("RDP order alpha must be > 1");
  if (z <= 0.0) return kEpsilonInfinite;
  return alpha * delta_rel * delta_rel / (2.0 * z * z);
}

double rdp_subsampled_gaussian(int alpha, double z, double p,
                               double delta_rel) {
  if (alpha < 2) throw ConfigError("subsampled RDP needs integer alpha >= 2");
  if (p < 0.0 || p > 1.0) throw ConfigError("sampling rate p must lie in [0,1]");
  if (p == 0.0) return 0.0;
  if (z <= 0.0) return kEpsilonInfinite;
  const double zeff = z / delta_rel;
  std::vector<double> terms;
  terms.reserve(alpha + 1);
  const double log_p = std::log(p);
  const double log_1mp = p < 1.0 ? std::log1p(-p) : 0.0;
  for (int j = 0; j <= alpha; ++j) {
    if (p >= 1.0 && j < alpha) continue;  // (1-p)^{alpha-j} vanishes
    terms.push_back(log_binom(alpha, j) + (alpha - j) * log_1mp + j * log_p +
                    j * (j - 1) / (2.0 * zeff * zeff));
  }
  const double lse = log_sum_exp(terms);
  if (!std::isfinite(lse)) return kEpsilonInfinite;
  return std::max(0.0, lse / (alpha - 1.0));
}

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  grid.push_back(1.5);
  for (int a = 2; a <= 256; ++a) grid.push_back(static_cast<double>(a));
  return grid;
}

void PrivacyLedger::record(double noise_multiplier, double sampling_rate) {
  if (noise_multiplier <= 0.0)
    throw ConfigError("mechanism event needs noise multiplier > 0");
  if (sampling_rate <= 0.0 || sampling_rate > 1.0)
    throw ConfigError("mechanism event needs sampling rate in (0,1]");
  if (!events.empty() &&
      events.back().noise_multiplier == noise_multiplier &&
      events.back().sampling_rate == sampling_rate) {
    ++events.back().count;
    return;
  }
  events.push_back({noise_multiplier, sampling_rate, 1});
}

double epsilon_for_sigma(const PrivacyLedger& ledger) {
  if (ledger.delta <= 0.0 || ledger.delta >= 1.0)
    throw ConfigError("delta must lie in (0,1)");
  if (ledger.events.empty()) return 0.0;
  if (ledger.alpha_grid.empty()) throw ConfigError("empty alpha grid");
  const double delta_rel = relative_sensitivity(ledger.convention);
  const double log_inv_delta = std::log(1.0 / ledger.delta);
  double best = kEpsilonInfinite;
  for (double alpha : ledger.alpha_grid) {
    if (alpha <= 1.0) throw ConfigError("alpha grid values must be > 1");
    double total = 0.0;
    for (const auto& ev : ledger.events) {
      const double r = rdp_event(alpha, ev, delta_rel);
      if (!std::isfinite(r)) {
        total = kEpsilonInfinite;
        break;
      }
      total += ev.count * r;
    }
    if (!std::isfinite(total)) continue;
    best = std::min(best, total + log_inv_delta / (alpha - 1.0));
  }
  return best;
}

double sigma_for_epsilon(double eps_target, const FederationConfig& config) {
  config.validate();
  if (eps_target <= 0.0) throw ConfigError("epsilon target must be > 0");
  const double delta_rel = relative_sensitivity(config.sensitivity_convention);
  const double delta = config.effective_delta();
  if (config.q == config.m) {
    const double sigma = 4.0 * delta_rel * config.gamma *
                         std::sqrt(config.T * std::log(1.0 / delta)) /
                         (eps_target * config.m);
    if (sigma > 1e6 * config.gamma)
      throw InfeasibleError("privacy target infeasible: required sigma "
                            "exceeds 1e6 * gamma");
    return sigma;
  }
  const auto certified = [&](double sigma) {
    PrivacyLedger ledger;
    ledger.delta = delta;
    ledger.convention = config.sensitivity_convention;
    for (int t = 0; t < config.T; ++t)
      ledger.record(config.q * sigma / config.gamma,
                    static_cast<double>(config.q) / config.m);
    return epsilon_for_sigma(ledger);
  };
  double lo = 1e-6 * config.gamma / config.q;
  double hi = 1e6 * config.gamma / config.q;
  if (certified(hi) > eps_target)
    throw InfeasibleError("privacy target infeasible: required sigma exceeds "
                          "1e6 * gamma");
  if (certified(lo) <= eps_target) return lo;
  while ((hi - lo) / hi > 1e-4) {
    const double mid = 0.5 * (lo + hi);
    if (certified(mid) <= eps_target)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

}  // namespace privmtl
