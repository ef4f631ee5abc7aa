#pragma once

#include "tsm/common.hpp"
#include "tsm/rng.hpp"

#include <string_view>
#include <vector>

namespace tsm {

/// Gaussian mixture sum_i pi_i N(mu_i, s_i^2 I) in R^d with isotropic components.
struct MixtureSpec {
  std::size_t dim = 1;
  std::vector<double> weights;
  std::vector<Vec> means;
  std::vector<double> scales;

  std::size_t size() const { return weights.size(); }

  /// Collects every violated invariant into one std::invalid_argument.
  void validate() const;

  static MixtureSpec gaussian(const Vec& mean, double scale);
  /// 1-d mixture from scalar parameter lists.
  static MixtureSpec scalar(std::vector<double> weights, const std::vector<double>& means,
                            std::vector<double> scales);
};

double log_density(const MixtureSpec& p, const Vec& x);

/// Posterior component probabilities r_i(x), computed in log space.
std::vector<double> responsibilities(const MixtureSpec& p, const Vec& x);

/// grad log p(x) = sum_i r_i(x) (mu_i - x) / s_i^2.
Vec score(const MixtureSpec& p, const Vec& x);

Vec sample_one(const MixtureSpec& p, Rng& rng);
/// n i.i.d. draws as rows of an n x d matrix.
Mat sample(const MixtureSpec& p, Rng& rng, std::size_t n);

struct Moments {
  double total_variance;  // per-coordinate average when d > 1
  double mode_variance;   // sum_i pi_i s_i^2
};

Moments moments(const MixtureSpec& p);

/// Multiplies all means and scales by `factor`.
MixtureSpec rescaled(MixtureSpec p, double factor);

/// Rescaled copy with unit (per-coordinate average) total variance.
MixtureSpec normalized_to_unit_variance(const MixtureSpec& p);

enum class BenchmarkTarget { unit_gaussian, gentle_mixture, hard_mixture_same_var, hard_mixture_diff_var };

inline constexpr BenchmarkTarget kAllBenchmarks[] = {
    BenchmarkTarget::unit_gaussian, BenchmarkTarget::gentle_mixture,
    BenchmarkTarget::hard_mixture_same_var, BenchmarkTarget::hard_mixture_diff_var};

/// The 1-d benchmark targets, each rescaled to unit total variance.
///
/// The mixture parameters are stand-ins chosen to match the qualitative
/// descriptions (gentle overlap, widely separated modes with equal or
/// unequal spreads); they are not published values.
MixtureSpec benchmark_target(BenchmarkTarget which);
BenchmarkTarget parse_benchmark(std::string_view name);
std::string_view to_string(BenchmarkTarget which);

/// Two-mode 2-d training target: modes at (+-1.5, 0) with scale 0.5,
/// rescaled to unit average coordinate variance.
MixtureSpec two_mode_planar_target();

}  // namespace tsm
