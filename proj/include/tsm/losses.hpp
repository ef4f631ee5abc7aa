#pragma once

#include "tsm/targets.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace tsm {

enum class WeightingVariant {
  song,         // 1 / sigma_t^2
  dsm_optimal,  // (sigma_t^2 / v)(sigma_t^2 + v)
  tsm_optimal,  // (alpha_t^2 v / sigma_t^2)(sigma_t^2 + alpha_t^2 v)
  uniform,      // 1
  dsm_edm,      // (sigma_t^2 + v) / (sigma_t^2 v), the usual EDM form
};

/// Time weighting lambda_t of a score-matching loss; v = sigma_data2.
struct WeightingKind {
  WeightingVariant variant = WeightingVariant::uniform;
  double sigma_data2 = 1.0;

  std::string name() const;
};

WeightingKind parse_weighting(std::string_view name, double sigma_data2 = 1.0);

/// Unnormalized lambda_t; t must lie in [t_min, t_max].
double weighting(const WeightingKind& kind, const Schedule& sched, double t);

/// lambda_t / Z with Z the integral of lambda over [t_min, t_max].
class NormalizedWeighting {
 public:
  NormalizedWeighting(WeightingKind kind, Schedule sched);

  double operator()(double t) const { return weighting(kind_, sched_, t) / normalizer_; }
  double normalizer() const { return normalizer_; }
  const WeightingKind& kind() const { return kind_; }
  const Schedule& schedule() const { return sched_; }

 private:
  WeightingKind kind_;
  Schedule sched_;
  double normalizer_;
};

/// Z by composite trapezoid on 10^4 nodes placed geometrically in t, which
/// resolves the 1/sigma_t^2 growth near t_min. Throws std::domain_error if
/// the integral is not finite.
NormalizedWeighting normalize_weighting(const WeightingKind& kind, const Schedule& sched);

using ScoreFn = std::function<Vec(const Vec& x, double t)>;
using StaticScoreFn = std::function<Vec(const Vec& y)>;

struct Estimate {
  double value;
  double std_error;
};

/// Monte Carlo estimate of integral_{t_min}^{t_max} lambda~_t E||L - s(X_t, t)||^2 dt
/// with t ~ U[t_min, t_max] (the span enters as a factor).
Estimate empirical_loss(const ScoreTargetKind& kind, const NormalizedWeighting& weight,
                        const ScoreFn& s, const MixtureSpec& p0, const Schedule& sched,
                        std::size_t n, Rng& rng);

struct RelationCheck {
  double lhs;        // TSM loss
  double rhs;        // DSM loss + E||grad log p_X||^2 / alpha^2 - E||grad log p_{Y|X}||^2
  double std_error;  // of the per-sample difference lhs - rhs
};

/// TSM/DSM decomposition for the fixed-noise model Y = alpha X + N(0, sigma^2 I),
/// evaluated on shared draws.
RelationCheck tsm_dsm_relation_check(const StaticScoreFn& s, const MixtureSpec& p0, double sigma,
                                     double alpha, std::size_t n, Rng& rng);

struct RescalingCheck {
  double l_x0;          // E||x_pred(Y) - X||^2
  double l_dsm_scaled;  // sigma^4 E||s(Y) - grad_y log p(Y|X)||^2 with s = (x_pred - y)/sigma^2
  double max_rel_diff;  // largest per-sample relative discrepancy
};

/// Y = X + N(0, sigma^2 I).
RescalingCheck x0_rescaling_check(const StaticScoreFn& x_pred, const MixtureSpec& p0, double sigma,
                                  std::size_t n, Rng& rng);

/// Input/output/skip scalings and loss weight for a TSM-trained network under
/// Y = alpha X + W, chosen for a N(0, sigma_tar^2 I) target.
struct PreconditionCoeffs {
  double lambda;
  double c_i;
  double c_o;
  double c_s;
};

PreconditionCoeffs precondition_coeffs(double alpha, double sigma, double sigma_tar);

/// Coefficients of the equivalent x-space loss
/// lambda' E||c_o' F(c_i Y) + c_s' Y - alpha X||^2.
PreconditionCoeffs rescaled_precondition_coeffs(double alpha, double sigma, double sigma_tar);

/// Raw network F(sigma, scaled input).
using RawNetwork = std::function<Vec(double sigma, const Vec& input)>;

/// s(y) = c_o F(sigma, c_i y) + c_s y.
Vec preconditioned_score(const RawNetwork& net, double alpha, double sigma, double sigma_tar,
                         const Vec& y);

struct NamedTarget {
  std::string name;
  MixtureSpec spec;
};

struct LossDistConfig {
  std::size_t reps = 10000;
  std::size_t n_per_rep = 100;
  std::uint64_t seed = 0;
  unsigned workers = 0;
};

struct LossDistRow {
  std::string target;
  std::string kind;
  std::string weighting;
  std::size_t rep;
  double loss_value;
};

/// Repeated loss estimates at the true score for every (target, kind, weighting).
/// Rep r of a target uses the same random stream for every kind and weighting.
/// Weightings use each target's total variance as sigma_data2.
std::vector<LossDistRow> loss_distribution_study(const std::vector<NamedTarget>& targets,
                                                 const std::vector<ScoreTargetKind>& kinds,
                                                 const std::vector<WeightingVariant>& weightings,
                                                 const Schedule& sched, const LossDistConfig& cfg);

}  // namespace tsm
