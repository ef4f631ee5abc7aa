#pragma once

#include "tsm/analytic.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace tsm {

enum class TargetVariant { dsi, tsi, mix, kappa, kappa_bar, phillips };

/// Which regression target L(x0, x_t, t) is used.
struct ScoreTargetKind {
  TargetVariant variant = TargetVariant::dsi;
  /// Weight on the denoising term for `mix`; must map [0,1] into [0,1].
  std::function<double(double)> mix_weight;
  /// Label used in tables; defaults to the variant name.
  std::string label;

  static ScoreTargetKind dsi() { return {TargetVariant::dsi, {}, "dsi"}; }
  static ScoreTargetKind tsi() { return {TargetVariant::tsi, {}, "tsi"}; }
  static ScoreTargetKind kappa() { return {TargetVariant::kappa, {}, "kappa"}; }
  static ScoreTargetKind kappa_bar() { return {TargetVariant::kappa_bar, {}, "kappa_bar"}; }
  static ScoreTargetKind phillips() { return {TargetVariant::phillips, {}, "phillips"}; }
  static ScoreTargetKind mix(std::function<double(double)> w, std::string label = "mix") {
    return {TargetVariant::mix, std::move(w), std::move(label)};
  }

  const std::string& name() const { return label; }
};

/// Accepts dsi, tsi, kappa, kappa_bar, phillips and mix:<w> (constant weight).
ScoreTargetKind parse_target_kind(std::string_view name);

/// sigma_t^2 / (sigma_t^2 + alpha_t^2 v).
double kappa(double t, double sigma_data2, const Schedule& sched);
/// kappa with v = sum_i pi_i s_i^2.
double kappa_bar(double t, const MixtureSpec& p0, const Schedule& sched);

/// A target kind bound to a prior and a schedule, so per-call work is minimal.
class ScoreTarget {
 public:
  ScoreTarget(ScoreTargetKind kind, MixtureSpec p0, Schedule sched);

  /// Weight on the denoising term (1 for dsi, 0 for tsi); not defined for phillips.
  double denoising_weight(double t) const;

  /// L(x0, x_t, t); t must lie in [t_min, t_max].
  Vec value(const Vec& x0, const Vec& x_t, double t) const;

  const ScoreTargetKind& kind() const { return kind_; }
  const MixtureSpec& prior() const { return p0_; }
  const Schedule& schedule() const { return sched_; }

 private:
  ScoreTargetKind kind_;
  MixtureSpec p0_;
  Schedule sched_;
  double total_variance_;
  double mode_variance_;
};

Vec target_value(const ScoreTargetKind& kind, const MixtureSpec& p0, const Schedule& sched,
                 const Vec& x0, const Vec& x_t, double t);

struct McScore {
  Vec estimate;
  /// Sum over coordinates of the sample variance of the integrand.
  double variance_sum;
};

/// Average of L over n_inner exact posterior draws given x_t.
McScore mc_score(const ScoreTargetKind& kind, const MixtureSpec& p0, const Schedule& sched,
                 const Vec& x_t, double t, std::size_t n_inner, Rng& rng);

struct SnisResult {
  Vec estimate;
  Vec std_error;  // delta-method standard error per coordinate
  double ess;   // 1 / sum of squared normalized weights
};

/// Self-normalized importance-sampling estimate of grad log p_Y(y) for
/// Y = X + N(0, sigma^2 I), with proposal N(y, sigma^2 I). The proposal
/// cancels the likelihood, leaving weights proportional to p_X.
SnisResult snis_score(const MixtureSpec& p0, const Vec& y, double sigma, std::size_t n, Rng& rng);

struct VarianceStudyConfig {
  std::size_t n_outer = 10000;
  std::size_t n_inner = 100;
  std::vector<double> t_grid;  // empty: 50 uniform points in [0.01, 0.99]
  std::uint64_t seed = 0;
  unsigned workers = 0;

  void validate() const;
  std::vector<double> grid() const;
};

struct VarianceRow {
  double t;
  std::string kind;
  double mean_variance;
};

/// For each t: draw n_outer x_t ~ p_t, estimate the score from n_inner posterior
/// draws, and average the integrand variance over the outer draws. All kinds
/// share the same x_t and posterior draws. Rows are ordered by t, then kind.
std::vector<VarianceRow> variance_study(const MixtureSpec& p0, const Schedule& sched,
                                        const std::vector<ScoreTargetKind>& kinds,
                                        const VarianceStudyConfig& cfg);

std::vector<double> uniform_grid(double lo, double hi, std::size_t n);

}  // namespace tsm
