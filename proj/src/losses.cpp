#include "tsm/losses.hpp"

#include "tsm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tsm {

std::string WeightingKind::name() const {
  switch (variant) {
    case WeightingVariant::song: return "song";
    case WeightingVariant::dsm_optimal: return "dsm_optimal";
    case WeightingVariant::tsm_optimal: return "tsm_optimal";
    case WeightingVariant::uniform: return "uniform";
    case WeightingVariant::dsm_edm: return "dsm_edm";
  }
  return "unknown";
}

WeightingKind parse_weighting(std::string_view name, double sigma_data2) {
  if (!(sigma_data2 > 0.0) || !std::isfinite(sigma_data2)) {
    throw std::invalid_argument("weighting: sigma_data2 must be positive and finite");
  }
  for (auto v : {WeightingVariant::song, WeightingVariant::dsm_optimal, WeightingVariant::tsm_optimal,
                 WeightingVariant::uniform, WeightingVariant::dsm_edm}) {
    WeightingKind k{v, sigma_data2};
    if (k.name() == name) return k;
  }
  throw std::invalid_argument("unknown weighting '" + std::string(name) + "'");
}

double weighting(const WeightingKind& kind, const Schedule& sched, double t) {
  require_clamped(sched, t, "weighting");
  const auto [alpha, sigma] = alpha_sigma(sched, t);
  const double s2 = sigma * sigma;
  const double a2 = alpha * alpha;
  const double v = kind.sigma_data2;
  switch (kind.variant) {
    case WeightingVariant::song: return 1.0 / s2;
    case WeightingVariant::dsm_optimal: return (s2 / v) * (s2 + v);
    case WeightingVariant::tsm_optimal: return (a2 * v / s2) * (s2 + a2 * v);
    case WeightingVariant::uniform: return 1.0;
    case WeightingVariant::dsm_edm: return (s2 + v) / (s2 * v);
  }
  throw std::logic_error("unknown weighting variant");
}

namespace {

double trapezoid_normalizer(const WeightingKind& kind, const Schedule& sched) {
  constexpr std::size_t kNodes = 10000;
  const double ratio = sched.t_max / sched.t_min;
  double prev_t = sched.t_min;
  double prev_f = weighting(kind, sched, prev_t);
  double z = 0.0;
  for (std::size_t k = 1; k < kNodes; ++k) {
    double t = sched.t_min * std::pow(ratio, static_cast<double>(k) / static_cast<double>(kNodes - 1));
    if (k == kNodes - 1) t = sched.t_max;
    t = std::min(t, sched.t_max);
    const double f = weighting(kind, sched, t);
    z += 0.5 * (t - prev_t) * (f + prev_f);
    prev_t = t;
    prev_f = f;
  }
  if (!std::isfinite(z) || !(z > 0.0)) {
    throw std::domain_error("weighting '" + kind.name() + "' has no finite positive integral");
  }
  return z;
}

}  // namespace

NormalizedWeighting::NormalizedWeighting(WeightingKind kind, Schedule sched)
    : kind_(kind), sched_(sched), normalizer_(0.0) {
  sched_.validate();
  normalizer_ = trapezoid_normalizer(kind_, sched_);
}

NormalizedWeighting normalize_weighting(const WeightingKind& kind, const Schedule& sched) {
  return NormalizedWeighting(kind, sched);
}

namespace {

Estimate mean_and_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return {mean, se};
}

Vec noise(Rng& rng, Eigen::Index d) {
  Vec z(d);
  for (Eigen::Index c = 0; c < d; ++c) z[c] = rng.normal();
  return z;
}

}  // namespace

Estimate empirical_loss(const ScoreTargetKind& kind, const NormalizedWeighting& weight,
                        const ScoreFn& s, const MixtureSpec& p0, const Schedule& sched,
                        std::size_t n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("empirical_loss: n must be at least 1");
  const ScoreTarget target(kind, p0, sched);
  const auto d = static_cast<Eigen::Index>(p0.dim);
  std::vector<double> vals(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = rng.uniform(sched.t_min, sched.t_max);
    const auto [alpha, sigma] = alpha_sigma(sched, t);
    const Vec x0 = sample_one(p0, rng);
    const Vec x_t = alpha * x0 + sigma * noise(rng, d);
    const Vec r = target.value(x0, x_t, t) - s(x_t, t);
    vals[i] = sched.span() * weight(t) * r.squaredNorm();
  }
  return mean_and_se(vals);
}

RelationCheck tsm_dsm_relation_check(const StaticScoreFn& s, const MixtureSpec& p0, double sigma,
                                     double alpha, std::size_t n, Rng& rng) {
  if (!(sigma > 0.0) || !(alpha > 0.0)) {
    throw std::invalid_argument("tsm_dsm_relation_check: alpha and sigma must be positive");
  }
  if (n < 2) throw std::invalid_argument("tsm_dsm_relation_check: n must be at least 2");
  const auto d = static_cast<Eigen::Index>(p0.dim);
  double lhs = 0.0;
  double rhs = 0.0;
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec x = sample_one(p0, rng);
    const Vec y = alpha * x + sigma * noise(rng, d);
    const Vec sy = s(y);
    const Vec a = score(p0, x) / alpha;
    const Vec b = (alpha * x - y) / (sigma * sigma);
    const double l = (sy - a).squaredNorm();
    const double r = (sy - b).squaredNorm() + a.squaredNorm() - b.squaredNorm();
    lhs += l;
    rhs += r;
    diff[i] = l - r;
  }
  const double nn = static_cast<double>(n);
  return {lhs / nn, rhs / nn, mean_and_se(diff).std_error};
}

RescalingCheck x0_rescaling_check(const StaticScoreFn& x_pred, const MixtureSpec& p0, double sigma,
                                  std::size_t n, Rng& rng) {
  if (!(sigma > 0.0)) throw std::invalid_argument("x0_rescaling_check: sigma must be positive");
  if (n < 1) throw std::invalid_argument("x0_rescaling_check: n must be at least 1");
  const auto d = static_cast<Eigen::Index>(p0.dim);
  const double s2 = sigma * sigma;
  double lx = 0.0;
  double ld = 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec x = sample_one(p0, rng);
    const Vec y = x + sigma * noise(rng, d);
    const Vec xp = x_pred(y);
    const double a = (xp - x).squaredNorm();
    const Vec s = (xp - y) / s2;
    const Vec target = (x - y) / s2;
    const double b = s2 * s2 * (s - target).squaredNorm();
    lx += a;
    ld += b;
    const double scale = std::max(std::abs(a), std::abs(b));
    if (scale > 0.0) worst = std::max(worst, std::abs(a - b) / scale);
  }
  const double nn = static_cast<double>(n);
  return {lx / nn, ld / nn, worst};
}

namespace {

void require_positive_coeff_args(double alpha, double sigma, double sigma_tar) {
  if (!(alpha > 0.0) || !(sigma > 0.0) || !(sigma_tar > 0.0)) {
    throw std::invalid_argument("preconditioning: alpha, sigma and sigma_tar must be positive");
  }
}

}  // namespace

PreconditionCoeffs precondition_coeffs(double alpha, double sigma, double sigma_tar) {
  require_positive_coeff_args(alpha, sigma, sigma_tar);
  const double a2v = alpha * alpha * sigma_tar * sigma_tar;
  const double s2 = sigma * sigma;
  const double total = s2 + a2v;
  return {a2v * total / s2, 1.0 / std::sqrt(total), -sigma / (alpha * sigma_tar * std::sqrt(total)),
          -1.0 / total};
}

PreconditionCoeffs rescaled_precondition_coeffs(double alpha, double sigma, double sigma_tar) {
  const PreconditionCoeffs c = precondition_coeffs(alpha, sigma, sigma_tar);
  const double k2 = alpha * alpha * sigma_tar * sigma_tar;
  return {c.lambda / (k2 * k2), c.c_i, -k2 * c.c_o, -k2 * c.c_s};
}

Vec preconditioned_score(const RawNetwork& net, double alpha, double sigma, double sigma_tar,
                         const Vec& y) {
  const PreconditionCoeffs c = precondition_coeffs(alpha, sigma, sigma_tar);
  return c.c_o * net(sigma, c.c_i * y) + c.c_s * y;
}

std::vector<LossDistRow> loss_distribution_study(const std::vector<NamedTarget>& targets,
                                                 const std::vector<ScoreTargetKind>& kinds,
                                                 const std::vector<WeightingVariant>& weightings,
                                                 const Schedule& sched, const LossDistConfig& cfg) {
  if (cfg.reps < 1 || cfg.n_per_rep < 1) {
    throw std::invalid_argument("loss_distribution_study: reps and n_per_rep must be positive");
  }
  sched.validate();
  const std::size_t nt = targets.size();
  const std::size_t nk = kinds.size();
  const std::size_t nw = weightings.size();
  const std::size_t reps = cfg.reps;

  std::vector<std::vector<ScoreTarget>> bound(nt);
  std::vector<std::vector<NormalizedWeighting>> weights(nt);
  for (std::size_t ti = 0; ti < nt; ++ti) {
    targets[ti].spec.validate();
    const double v = moments(targets[ti].spec).total_variance;
    for (const auto& k : kinds) bound[ti].emplace_back(k, targets[ti].spec, sched);
    for (auto w : weightings) weights[ti].emplace_back(WeightingKind{w, v}, sched);
  }

  // values[((ti * nk + k) * nw + w) * reps + rep]
  std::vector<double> values(nt * nk * nw * reps);
  parallel_for(nt * reps, cfg.workers, [&](std::size_t task) {
    const std::size_t ti = task / reps;
    const std::size_t rep = task % reps;
    const MixtureSpec& p0 = targets[ti].spec;
    const auto d = static_cast<Eigen::Index>(p0.dim);
    Rng rng = Rng::substream(cfg.seed, {ti, rep});
    std::vector<double> acc(nk * nw, 0.0);
    for (std::size_t i = 0; i < cfg.n_per_rep; ++i) {
      const double t = rng.uniform(sched.t_min, sched.t_max);
      const auto [alpha, sigma] = alpha_sigma(sched, t);
      const Vec x0 = sample_one(p0, rng);
      const Vec x_t = alpha * x0 + sigma * noise(rng, d);
      const Vec s = true_score(p0, sched, t, x_t);
      for (std::size_t k = 0; k < nk; ++k) {
        const double err = (bound[ti][k].value(x0, x_t, t) - s).squaredNorm();
        for (std::size_t w = 0; w < nw; ++w) acc[k * nw + w] += sched.span() * weights[ti][w](t) * err;
      }
    }
    for (std::size_t kw = 0; kw < nk * nw; ++kw) {
      values[(ti * nk * nw + kw) * reps + rep] = acc[kw] / static_cast<double>(cfg.n_per_rep);
    }
  });

  std::vector<LossDistRow> rows;
  rows.reserve(values.size());
  for (std::size_t ti = 0; ti < nt; ++ti) {
    for (std::size_t k = 0; k < nk; ++k) {
      for (std::size_t w = 0; w < nw; ++w) {
        const std::string wname = weights[ti][w].kind().name();
        for (std::size_t rep = 0; rep < reps; ++rep) {
          rows.push_back({targets[ti].name, kinds[k].name(), wname, rep,
                          values[((ti * nk + k) * nw + w) * reps + rep]});
        }
      }
    }
  }
  return rows;
}

}  // namespace tsm
