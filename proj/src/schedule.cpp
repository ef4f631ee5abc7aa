#include "tsm/schedule.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace tsm {

namespace {
constexpr double kHalfPi = std::numbers::pi / 2.0;
}

void Schedule::validate() const {
  std::ostringstream err;
  if (!(t_min > 0.0 && t_min < 0.5)) err << "schedule.t_min must lie in (0, 0.5); ";
  if (!(t_max > 0.5 && t_max < 1.0)) err << "schedule.t_max must lie in (0.5, 1); ";
  if (!err.str().empty()) throw std::invalid_argument(err.str());
}

AlphaSigma alpha_sigma(const Schedule& sched, double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::domain_error("alpha_sigma: t = " + std::to_string(t) + " outside [0, 1]");
  }
  switch (sched.kind) {
    case ScheduleKind::cosine:
      // Exact endpoints; cos(pi/2) is not exactly zero in floating point.
      if (t == 0.0) return {1.0, 0.0};
      if (t == 1.0) return {0.0, 1.0};
      return {std::cos(kHalfPi * t), std::sin(kHalfPi * t)};
  }
  throw std::logic_error("unknown schedule kind");
}

void require_clamped(const Schedule& sched, double t, std::string_view what) {
  if (!(t >= sched.t_min && t <= sched.t_max)) {
    throw std::domain_error(std::string(what) + ": t = " + std::to_string(t) + " outside [" +
                            std::to_string(sched.t_min) + ", " + std::to_string(sched.t_max) + "]");
  }
}

DriftDiffusion drift_diffusion(const Schedule& sched, double t) {
  require_clamped(sched, t, "drift_diffusion");
  switch (sched.kind) {
    case ScheduleKind::cosine: {
      // f = d/dt log cos(pi t / 2); g^2 = d sigma^2/dt - 2 f sigma^2 = pi tan(pi t / 2).
      const double tan_u = std::tan(kHalfPi * t);
      return {-kHalfPi * tan_u, std::numbers::pi * tan_u};
    }
  }
  throw std::logic_error("unknown schedule kind");
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "cosine") return ScheduleKind::cosine;
  throw std::invalid_argument("unknown schedule kind '" + std::string(name) + "'");
}

}  // namespace tsm
