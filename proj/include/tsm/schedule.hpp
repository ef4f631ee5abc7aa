#pragma once

#include <string_view>

namespace tsm {

enum class ScheduleKind { cosine };

/// Variance-preserving noising schedule x_t = alpha_t x_0 + sigma_t eps.
///
/// Operations that divide by sigma_t or alpha_t only accept t in
/// [t_min, t_max]; the closed-form quantities accept the full [0, 1].
struct Schedule {
  ScheduleKind kind = ScheduleKind::cosine;
  double t_min = 1e-3;
  double t_max = 1.0 - 1e-3;

  /// Throws std::invalid_argument if t_min/t_max are out of range.
  void validate() const;
  double span() const { return t_max - t_min; }
};

struct AlphaSigma {
  double alpha;
  double sigma;
};

/// Drift f_t = d/dt log alpha_t and squared diffusion g_t^2 of the forward SDE.
struct DriftDiffusion {
  double f;
  double g2;
};

/// (alpha_t, sigma_t); domain error if t is outside [0, 1].
AlphaSigma alpha_sigma(const Schedule& sched, double t);

/// Analytic (f_t, g_t^2); domain error outside [t_min, t_max].
DriftDiffusion drift_diffusion(const Schedule& sched, double t);

/// Throws std::domain_error naming `what` when t is outside [t_min, t_max].
void require_clamped(const Schedule& sched, double t, std::string_view what);

ScheduleKind parse_schedule_kind(std::string_view name);

}  // namespace tsm
