#include "tsm/targets.hpp"

#include "tsm/parallel.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace tsm {

ScoreTargetKind parse_target_kind(std::string_view name) {
  if (name == "dsi") return ScoreTargetKind::dsi();
  if (name == "tsi") return ScoreTargetKind::tsi();
  if (name == "kappa") return ScoreTargetKind::kappa();
  if (name == "kappa_bar") return ScoreTargetKind::kappa_bar();
  if (name == "phillips") return ScoreTargetKind::phillips();
  if (name.starts_with("mix:")) {
    const std::string value(name.substr(4));
    std::size_t used = 0;
    double w = std::numeric_limits<double>::quiet_NaN();
    try {
      w = std::stod(value, &used);
    } catch (const std::exception&) {
    }
    if (used != value.size() || !(w >= 0.0 && w <= 1.0)) {
      throw std::invalid_argument("mix weight must be a number in [0, 1], got '" + value + "'");
    }
    return ScoreTargetKind::mix([w](double) { return w; }, std::string(name));
  }
  throw std::invalid_argument("unknown target kind '" + std::string(name) + "'");
}

double kappa(double t, double sigma_data2, const Schedule& sched) {
  if (!(sigma_data2 > 0.0)) throw std::invalid_argument("kappa: sigma_data2 must be positive");
  const auto [alpha, sigma] = alpha_sigma(sched, t);
  const double s2 = sigma * sigma;
  return s2 / (s2 + alpha * alpha * sigma_data2);
}

double kappa_bar(double t, const MixtureSpec& p0, const Schedule& sched) {
  return kappa(t, moments(p0).mode_variance, sched);
}

ScoreTarget::ScoreTarget(ScoreTargetKind kind, MixtureSpec p0, Schedule sched)
    : kind_(std::move(kind)), p0_(std::move(p0)), sched_(sched) {
  if (kind_.variant == TargetVariant::mix && !kind_.mix_weight) {
    throw std::invalid_argument("mix target requires a weight function");
  }
  const Moments mom = moments(p0_);
  total_variance_ = mom.total_variance;
  mode_variance_ = mom.mode_variance;
}

double ScoreTarget::denoising_weight(double t) const {
  switch (kind_.variant) {
    case TargetVariant::dsi: return 1.0;
    case TargetVariant::tsi: return 0.0;
    case TargetVariant::kappa: return kappa(t, total_variance_, sched_);
    case TargetVariant::kappa_bar: return kappa(t, mode_variance_, sched_);
    case TargetVariant::mix: {
      const double w = kind_.mix_weight(t);
      if (!(w >= 0.0 && w <= 1.0)) throw std::domain_error("mix weight outside [0, 1]");
      return w;
    }
    case TargetVariant::phillips:
      throw std::logic_error("phillips target has no denoising weight");
  }
  throw std::logic_error("unknown target variant");
}

Vec ScoreTarget::value(const Vec& x0, const Vec& x_t, double t) const {
  require_clamped(sched_, t, "target_value");
  const auto [alpha, sigma] = alpha_sigma(sched_, t);
  if (kind_.variant == TargetVariant::phillips) {
    return alpha * (x0 + score(p0_, x0)) - x_t;
  }
  const double w = denoising_weight(t);
  const double inv_alpha = 1.0 / alpha;
  if (w == 1.0) return (alpha * x0 - x_t) / (sigma * sigma);
  if (w == 0.0) return inv_alpha * score(p0_, x0);
  return w * ((alpha * x0 - x_t) / (sigma * sigma)) + (1.0 - w) * (inv_alpha * score(p0_, x0));
}

Vec target_value(const ScoreTargetKind& kind, const MixtureSpec& p0, const Schedule& sched,
                 const Vec& x0, const Vec& x_t, double t) {
  return ScoreTarget(kind, p0, sched).value(x0, x_t, t);
}

namespace {

// Sample mean and summed per-coordinate sample variance of the rows of v.
McScore summarize(const Mat& v) {
  const Eigen::Index n = v.rows();
  Vec mean = v.colwise().mean().transpose();
  double var_sum = 0.0;
  if (n > 1) {
    var_sum = (v.rowwise() - mean.transpose()).array().square().sum() / static_cast<double>(n - 1);
  }
  return {std::move(mean), var_sum};
}

}  // namespace

McScore mc_score(const ScoreTargetKind& kind, const MixtureSpec& p0, const Schedule& sched,
                 const Vec& x_t, double t, std::size_t n_inner, Rng& rng) {
  if (n_inner < 2) throw std::invalid_argument("mc_score: n_inner must be at least 2");
  const ScoreTarget target(kind, p0, sched);
  const Mat draws = posterior_sample(p0, sched, t, x_t, rng, n_inner);
  Mat values(draws.rows(), draws.cols());
  for (Eigen::Index k = 0; k < draws.rows(); ++k) {
    values.row(k) = target.value(draws.row(k).transpose(), x_t, t).transpose();
  }
  return summarize(values);
}

SnisResult snis_score(const MixtureSpec& p0, const Vec& y, double sigma, std::size_t n, Rng& rng) {
  if (!(sigma > 0.0)) throw std::invalid_argument("snis_score: sigma must be positive");
  if (n < 2) throw std::invalid_argument("snis_score: n must be at least 2");
  const Eigen::Index d = y.size();
  Mat xs(static_cast<Eigen::Index>(n), d);
  std::vector<double> logw(n);
  double max_logw = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    for (Eigen::Index c = 0; c < d; ++c) xs(static_cast<Eigen::Index>(j), c) = y[c] + sigma * rng.normal();
    logw[j] = log_density(p0, xs.row(static_cast<Eigen::Index>(j)).transpose());
    if (logw[j] > max_logw) max_logw = logw[j];
  }
  if (!std::isfinite(max_logw)) {
    throw WeightDegeneracyError("snis_score: every importance weight is zero");
  }
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    w[j] = std::exp(logw[j] - max_logw);
    total += w[j];
  }
  Vec est = Vec::Zero(d);
  std::vector<Vec> f(n);
  double sum_sq = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    w[j] /= total;
    sum_sq += w[j] * w[j];
    f[j] = score(p0, xs.row(static_cast<Eigen::Index>(j)).transpose());
    est += w[j] * f[j];
  }
  Vec var = Vec::Zero(d);
  for (std::size_t j = 0; j < n; ++j) var += (w[j] * w[j]) * (f[j] - est).array().square().matrix();
  return {std::move(est), var.array().sqrt().matrix(), 1.0 / sum_sq};
}

std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
  std::vector<double> g(n);
  if (n == 1) {
    g[0] = lo;
    return g;
  }
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return g;
}

void VarianceStudyConfig::validate() const {
  std::ostringstream err;
  if (n_outer < 2) err << "n_outer must be at least 2; ";
  if (n_inner < 2) err << "n_inner must be at least 2; ";
  if (!err.str().empty()) throw std::invalid_argument(err.str());
}

std::vector<double> VarianceStudyConfig::grid() const {
  return t_grid.empty() ? uniform_grid(0.01, 0.99, 50) : t_grid;
}

std::vector<VarianceRow> variance_study(const MixtureSpec& p0, const Schedule& sched,
                                        const std::vector<ScoreTargetKind>& kinds,
                                        const VarianceStudyConfig& cfg) {
  cfg.validate();
  const std::vector<double> grid = cfg.grid();
  for (double t : grid) require_clamped(sched, t, "variance_study");

  std::vector<ScoreTarget> targets;
  targets.reserve(kinds.size());
  for (const auto& k : kinds) targets.emplace_back(k, p0, sched);

  const std::size_t nk = kinds.size();
  const std::size_t n_outer = cfg.n_outer;
  const std::size_t n_inner = cfg.n_inner;
  const std::size_t d = p0.dim;
  // variances[(ti * n_outer + draw) * nk + k]
  std::vector<double> variances(grid.size() * n_outer * nk);

  parallel_for(grid.size() * n_outer, cfg.workers, [&](std::size_t task) {
    const std::size_t ti = task / n_outer;
    const std::size_t draw = task % n_outer;
    const double t = grid[ti];
    Rng rng = Rng::substream(cfg.seed, {ti, draw});
    const auto [alpha, sigma] = alpha_sigma(sched, t);

    Vec x_t = alpha * sample_one(p0, rng);
    for (std::size_t c = 0; c < d; ++c) x_t[static_cast<Eigen::Index>(c)] += sigma * rng.normal();

    const MixtureSpec post = posterior(p0, sched, t, x_t);
    const Mat draws = sample(post, rng, n_inner);
    Mat values(static_cast<Eigen::Index>(n_inner), static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < nk; ++k) {
      for (Eigen::Index j = 0; j < draws.rows(); ++j) {
        values.row(j) = targets[k].value(draws.row(j).transpose(), x_t, t).transpose();
      }
      variances[task * nk + k] = summarize(values).variance_sum;
    }
  });

  std::vector<VarianceRow> rows;
  rows.reserve(grid.size() * nk);
  for (std::size_t ti = 0; ti < grid.size(); ++ti) {
    for (std::size_t k = 0; k < nk; ++k) {
      double acc = 0.0;
      for (std::size_t draw = 0; draw < n_outer; ++draw) acc += variances[(ti * n_outer + draw) * nk + k];
      rows.push_back({grid[ti], kinds[k].name(), acc / static_cast<double>(n_outer)});
    }
  }
  return rows;
}

}  // namespace tsm
