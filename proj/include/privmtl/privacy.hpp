#pragma once

#include <limits>
#include <vector>

#include "privmtl/rng.hpp"
#include "privmtl/types.hpp"

namespace privmtl {

/// g * min(1, gamma / ||g||_2); the zero vector maps to itself.
ParamVector clip(const ParamVector& g, double gamma);

/// Adds i.i.d. N(0, sigma^2) noise per coordinate; sigma = 0 is the identity.
ParamVector gaussian_mechanism(const ParamVector& mean_update, double sigma,
                               RngStream& rng);

/// One (possibly subsampled) Gaussian release. z is the noise multiplier
/// q*sigma/gamma; p = q/m is the sampling rate.
struct MechanismEvent {
  double noise_multiplier = 0.0;
  double sampling_rate = 1.0;
  long count = 1;
};

/// RDP of one non-subsampled Gaussian release at order alpha:
/// alpha * delta_rel^2 / (2 z^2), where delta_rel is the sensitivity in
/// units of gamma (1 under the kPaper convention, 2 under kConservative).
double rdp_gaussian(double alpha, double z, double delta_rel = 1.0);

/// Integer-order RDP bound for one Poisson-subsampled Gaussian release,
/// evaluated in log-space. Returns +inf if the bound diverges. p = 1
/// reduces to rdp_gaussian.
double rdp_subsampled_gaussian(int alpha, double z, double p,
                               double delta_rel = 1.0);

/// Default RDP orders: 1.5 plus the integers 2..256.
std::vector<double> default_alpha_grid();

struct PrivacyLedger {
  std::vector<MechanismEvent> events;
  double delta = 1e-2;
  std::vector<double> alpha_grid = default_alpha_grid();
  SensitivityConvention convention = SensitivityConvention::kPaper;

  /// Records one round; coalesces with the previous event when parameters match.
  void record(double noise_multiplier, double sampling_rate);
};

/// Optimal (epsilon, delta)-DP conversion over the ledger's order grid:
/// min_alpha [ sum_events count * rdp(alpha) + ln(1/delta)/(alpha-1) ].
/// An empty ledger spends nothing. Subsampled events are bounded at
/// integer orders only.
double epsilon_for_sigma(const PrivacyLedger& ledger);

/// Smallest sigma certifying eps_target over T rounds of the configured
/// mechanism. Closed form when q = m, bisection otherwise.
double sigma_for_epsilon(double eps_target, const FederationConfig& config);

constexpr double kEpsilonInfinite = std::numeric_limits<double>::infinity();

}  // namespace privmtl
