#pragma once

#include "tsm/schedule.hpp"
#include "tsm/common.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>

namespace tsm {

enum class SamplerScheme { euler_maruyama };

struct SamplerConfig {
  std::size_t steps = 1000;
  double t_start = 1.0 - 1e-3;
  double t_end = 1e-3;
  SamplerScheme scheme = SamplerScheme::euler_maruyama;
  std::uint64_t seed = 0;
  unsigned workers = 0;

  static SamplerConfig for_schedule(const Schedule& sched);
  void validate() const;
};

/// Score evaluated on a block of states (rows) at a common time.
using BatchScoreFn = std::function<Mat(const Mat& x, double t)>;

/// Integrates dX = [f_t X - g_t^2 s(X, t)] dt + g_t dB backwards from
/// X ~ N(0, I) at t_start to t_end with Euler-Maruyama on a uniform grid.
/// Each chain draws from its own substream, so results do not depend on the
/// worker count. Throws DivergenceError with the step index on a non-finite state.
Mat reverse_sample(const BatchScoreFn& score, const Schedule& sched, const SamplerConfig& cfg,
                   std::size_t n, std::size_t dim);

/// Median Euclidean distance over all distinct pairs of rows.
double median_pairwise_distance(const Mat& x);

/// Unbiased MMD^2 with k(u, v) = exp(-||u - v||^2 / (2 h^2)). Without a
/// bandwidth, h is the median pairwise distance of the pooled sample.
double mmd2(const Mat& a, const Mat& b, std::optional<double> bandwidth = std::nullopt);

/// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::span<const double> a, std::span<const double> b);

}  // namespace tsm
