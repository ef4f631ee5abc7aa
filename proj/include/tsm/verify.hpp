#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tsm {

/// One identity check: the largest discrepancy seen on its probe grid against a tolerance.
struct CheckResult {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::size_t probes = 0;
  bool passed = false;
  std::string detail;
};

struct IdentitySuiteConfig {
  std::uint64_t seed = 0;
  std::size_t probes_per_target = 20;
  double quadrature_tolerance = 1e-6;
  double monte_carlo_tolerance = 1e-3;
  /// Monte Carlo checks grow their sample until 4 standard errors fit inside
  /// the tolerance, but never beyond this many draws per probe.
  std::size_t max_draws = 100'000'000;
  /// Skip the sampled SO(2) check (the slowest member of the suite).
  bool skip_so2_sampling = false;
};

/// Score identities checked against quadrature or closed forms:
/// additive and scaled TSI, DSI, Phillips, the kappa mixtures, general noise
/// (affine and cubic), bridge identities and the SO(2) identity.
std::vector<CheckResult> identity_suite(const IdentitySuiteConfig& cfg);

}  // namespace tsm
