#include "tsm/sampler.hpp"

#include "tsm/parallel.hpp"
#include "tsm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace tsm {

SamplerConfig SamplerConfig::for_schedule(const Schedule& sched) {
  SamplerConfig c;
  c.t_start = sched.t_max;
  c.t_end = sched.t_min;
  return c;
}

void SamplerConfig::validate() const {
  std::ostringstream err;
  if (steps < 2) err << "steps must be at least 2; ";
  if (!(t_start > t_end)) err << "t_start must exceed t_end; ";
  if (!err.str().empty()) throw std::invalid_argument("sampler config: " + err.str());
}

namespace {
// Chains are integrated in fixed blocks, each with its own substream.
constexpr std::size_t kChainBlock = 256;
}

Mat reverse_sample(const BatchScoreFn& score, const Schedule& sched, const SamplerConfig& cfg,
                   std::size_t n, std::size_t dim) {
  cfg.validate();
  require_clamped(sched, cfg.t_start, "reverse_sample t_start");
  require_clamped(sched, cfg.t_end, "reverse_sample t_end");
  const auto d = static_cast<Eigen::Index>(dim);
  Mat out(static_cast<Eigen::Index>(n), d);
  const std::size_t blocks = (n + kChainBlock - 1) / kChainBlock;
  const double dt = (cfg.t_start - cfg.t_end) / static_cast<double>(cfg.steps);

  parallel_for(blocks, cfg.workers, [&](std::size_t blk) {
    const std::size_t first = blk * kChainBlock;
    const auto rows = static_cast<Eigen::Index>(std::min(kChainBlock, n - first));
    Rng rng = Rng::substream(cfg.seed, {blk});
    Mat x(rows, d);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index c = 0; c < d; ++c) x(i, c) = rng.normal();
    }
    for (std::size_t k = 0; k < cfg.steps; ++k) {
      const double t = cfg.t_start - dt * static_cast<double>(k);
      const auto [f, g2] = drift_diffusion(sched, t);
      const Mat s = score(x, t);
      const double g_sqrt_dt = std::sqrt(g2 * dt);
      x -= (f * x - g2 * s) * dt;
      for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index c = 0; c < d; ++c) x(i, c) += g_sqrt_dt * rng.normal();
      }
      if (!x.allFinite()) {
        throw DivergenceError("reverse sampler produced a non-finite state at step " + std::to_string(k));
      }
    }
    out.middleRows(static_cast<Eigen::Index>(first), rows) = x;
  });
  return out;
}

double median_pairwise_distance(const Mat& x) {
  const Eigen::Index n = x.rows();
  if (n < 2) throw std::invalid_argument("median_pairwise_distance: need at least two points");
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) dist.push_back((x.row(i) - x.row(j)).norm());
  }
  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
  const double upper = dist[mid];
  if (dist.size() % 2 == 1) return upper;
  const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

namespace {

// Deterministic total order on samples so that mmd2(a, b) and mmd2(b, a)
// perform identical arithmetic.
bool ordered_before(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

double within_sum(const Mat& a, double inv2h2) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < a.rows(); ++j) s += std::exp(-(a.row(i) - a.row(j)).squaredNorm() * inv2h2);
  }
  return 2.0 * s;
}

}  // namespace

double mmd2(const Mat& a_in, const Mat& b_in, std::optional<double> bandwidth) {
  if (a_in.rows() < 2 || b_in.rows() < 2) throw std::invalid_argument("mmd2: each sample needs at least two points");
  if (a_in.cols() != b_in.cols()) throw std::invalid_argument("mmd2: samples differ in dimension");
  const bool swap = ordered_before(b_in, a_in);
  const Mat& a = swap ? b_in : a_in;
  const Mat& b = swap ? a_in : b_in;

  double h;
  if (bandwidth) {
    h = *bandwidth;
    if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("mmd2: bandwidth must be positive");
  } else {
    Mat pooled(a.rows() + b.rows(), a.cols());
    pooled << a, b;
    h = median_pairwise_distance(pooled);
    if (!(h > 0.0)) throw std::invalid_argument("mmd2: pooled sample is degenerate (median distance 0)");
  }
  const double inv2h2 = 1.0 / (2.0 * h * h);
  const double m = static_cast<double>(a.rows());
  const double n = static_cast<double>(b.rows());
  double cross = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) cross += std::exp(-(a.row(i) - b.row(j)).squaredNorm() * inv2h2);
  }
  return within_sum(a, inv2h2) / (m * (m - 1.0)) + within_sum(b, inv2h2) / (n * (n - 1.0)) -
         2.0 * cross / (m * n);
}

double ks_statistic(std::span<const double> a_in, std::span<const double> b_in) {
  if (a_in.empty() || b_in.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  std::vector<double> a(a_in.begin(), a_in.end());
  std::vector<double> b(b_in.begin(), b_in.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

}  // namespace tsm
