#include "tsm/verify.hpp"

#include "tsm/analytic.hpp"
#include "tsm/extensions.hpp"
#include "tsm/oracle.hpp"
#include "tsm/targets.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

namespace tsm {

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

double gauss(double x, double m, double s) {
  return std::exp(-0.5 * (x - m) * (x - m) / (s * s)) / (s * std::sqrt(2.0 * std::numbers::pi));
}

struct Tracker {
  CheckResult r;
  bool non_finite = false;
  Tracker(std::string name, double tol) {
    r.name = std::move(name);
    r.tolerance = tol;
  }
  void add(double err, const std::string& where) {
    ++r.probes;
    if (!std::isfinite(err)) {
      if (!non_finite) r.detail = "non-finite at " + where;
      non_finite = true;
    } else if (r.probes == 1 || err > r.max_error) {
      r.max_error = err;
      if (!non_finite) r.detail = "worst at " + where;
    }
  }
  CheckResult finish() {
    r.passed = r.probes > 0 && !non_finite && r.max_error <= r.tolerance;
    return r;
  }
};

std::string at(const std::string& what, const char* label, double v, double y) {
  std::ostringstream os;
  os << what << ' ' << label << '=' << v << " y=" << y;
  return os.str();
}

// (t, y) probes per benchmark target, y drawn from the diffused marginal.
struct Probe {
  double t;
  double y;
};

std::vector<Probe> schedule_probes(const MixtureSpec& p, const Schedule& s, std::size_t n, Rng& rng) {
  std::vector<Probe> out;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = rng.uniform(0.02, 0.98);
    const auto [a, sg] = alpha_sigma(s, t);
    out.push_back({t, a * sample_one(p, rng)[0] + sg * rng.normal()});
  }
  return out;
}

// Draw count for which four standard errors fit inside tol, given a pilot variance.
std::size_t draws_for(double variance, double tol, std::size_t floor, std::size_t cap) {
  const double need = std::ceil(16.0 * variance / (tol * tol));
  return static_cast<std::size_t>(std::clamp(need, static_cast<double>(floor), static_cast<double>(cap)));
}

}  // namespace

std::vector<CheckResult> identity_suite(const IdentitySuiteConfig& cfg) {
  const Schedule sched;
  const double qtol = cfg.quadrature_tolerance;
  const double mtol = cfg.monte_carlo_tolerance;
  std::vector<CheckResult> out;

  // ---- additive model Y = X + N(0, s^2): marginal is again a mixture ----
  {
    Tracker marginal("oracle_marginal_score", qtol), tsi("tsi_additive", qtol);
    Rng rng = Rng::substream(cfg.seed, {1});
    for (auto b : kAllBenchmarks) {
      const auto p = benchmark_target(b);
      auto px = [&](double x) { return std::exp(log_density(p, v1(x))); };
      for (std::size_t k = 0; k < cfg.probes_per_target; ++k) {
        const double sw = rng.uniform(0.1, 2.0);
        const double y = sample_one(p, rng)[0] + sw * rng.normal();
        MixtureSpec py = p;
        for (double& s : py.scales) s = std::sqrt(s * s + sw * sw);
        const double truth = score(py, v1(y))[0];
        auto noise = [&](double yy, double x) { return gauss(yy, x, sw); };
        const auto w = oracle::additive_window(p, 1.0, sw, y);
        const std::string where = at(std::string(to_string(b)), "sigma", sw, y);
        marginal.add(std::abs(oracle::quad_marginal_score(px, noise, y, w) - truth), where);
        tsi.add(std::abs(oracle::quad_posterior_expectation([&](double x) { return score(p, v1(x))[0]; }, px, noise,
                                                            y, w) -
                         truth),
                where);
      }
    }
    out.push_back(marginal.finish());
    out.push_back(tsi.finish());
  }

  // ---- cosine schedule: every regression target has the true score as its posterior mean ----
  {
    const std::vector<std::pair<std::string, ScoreTargetKind>> kinds = {
        {"dsi", ScoreTargetKind::dsi()},
        {"tsi_scaled", ScoreTargetKind::tsi()},
        {"phillips", ScoreTargetKind::phillips()},
        {"kappa_mixture", ScoreTargetKind::kappa()},
        {"kappa_bar_mixture", ScoreTargetKind::kappa_bar()},
    };
    std::vector<Tracker> tr;
    for (const auto& k : kinds) tr.emplace_back(k.first, qtol);
    Tracker affine("general_noise_affine", qtol);
    Rng rng = Rng::substream(cfg.seed, {2});
    for (auto b : kAllBenchmarks) {
      const auto p = benchmark_target(b);
      auto px = [&](double x) { return std::exp(log_density(p, v1(x))); };
      std::vector<ScoreTarget> targets;
      for (const auto& k : kinds) targets.emplace_back(k.second, p, sched);
      for (const auto& pr : schedule_probes(p, sched, cfg.probes_per_target, rng)) {
        const auto [a, sg] = alpha_sigma(sched, pr.t);
        auto noise = [&](double yy, double x) { return gauss(yy, a * x, sg); };
        const auto w = oracle::additive_window(p, a, sg, pr.y);
        const double truth = true_score(p, sched, pr.t, v1(pr.y))[0];
        const std::string where = at(std::string(to_string(b)), "t", pr.t, pr.y);
        for (std::size_t i = 0; i < kinds.size(); ++i) {
          const double e = oracle::quad_posterior_expectation(
              [&](double x) { return targets[i].value(v1(x), v1(pr.y), pr.t)[0]; }, px, noise, pr.y, w);
          tr[i].add(std::abs(e - truth), where);
        }
        const auto m = affine_noise_model(a, sg);
        const double e = oracle::quad_posterior_expectation(
            [&](double x) { return general_tsi_target(m, p, v1(x), v1(pr.y))[0]; }, px, noise, pr.y, w);
        affine.add(std::abs(e - truth), where);
      }
    }
    for (auto& t : tr) out.push_back(t.finish());
    out.push_back(affine.finish());
  }

  // ---- nonlinear noise y = x^3 + x + N(0, s^2) against the quadrature marginal ----
  {
    Tracker cubic("general_noise_cubic", qtol);
    for (auto b : kAllBenchmarks) {
      const auto p = benchmark_target(b);
      auto px = [&](double x) { return std::exp(log_density(p, v1(x))); };
      const auto w = oracle::mixture_window(p);
      for (double sw : {0.3, 1.0}) {
        const auto m = cubic_noise_model(sw);
        auto noise = [&](double y, double x) { return std::exp(m.log_likelihood(v1(y), v1(x))); };
        for (double y : {-1.0, 0.0, 1.5}) {
          const double ref = oracle::quad_marginal_score(px, noise, y, w);
          const double e = oracle::quad_posterior_expectation(
              [&](double x) { return general_tsi_target(m, p, v1(x), v1(y))[0]; }, px, noise, y, w);
          cubic.add(std::abs(e - ref), at(std::string(to_string(b)), "sigma", sw, y));
        }
      }
    }
    out.push_back(cubic.finish());
  }

  // ---- bridge: closed form through the posterior mean, then Monte Carlo ----
  {
    BridgeSpec even;
    BridgeSpec skew{0.7, 0.8, -1.2, 1.6, 0.5, 0.3};
    Tracker closed("bridge_closed_form", qtol);
    Tracker x0("bridge_via_x0", mtol), x1("bridge_via_x1", mtol), sym("bridge_symmetric", mtol);
    std::uint64_t probe = 0;
    const BridgeSpec specs[] = {even, skew};
    for (int which = 0; which < 2; ++which) {
      const BridgeSpec& b = specs[which];
      for (double y : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
        const auto post = bridge_posterior(b, y);
        const double g0 = -(post.mean[0] - b.m0) / (b.s0 * b.s0);
        const double g1 = -(post.mean[1] - b.m1) / (b.s1 * b.s1);
        const double truth = bridge_marginal_score(b, y);
        const std::string where = at(which == 0 ? "even" : "skew", "alpha", b.alpha, y);
        closed.add(std::max({std::abs(g0 / b.alpha - truth), std::abs(g1 / (1.0 - b.alpha) - truth),
                             std::abs(g0 + g1 - truth)}),
                   where);
        Rng pilot_rng = Rng::substream(cfg.seed, {3, probe, 0});
        const auto pilot = bridge_score_estimates(b, y, 100000, pilot_rng);
        const double var = std::max({pilot.var_x0, pilot.var_x1, pilot.var_symmetric});
        Rng rng = Rng::substream(cfg.seed, {3, probe, 1});
        const auto e = bridge_score_estimates(b, y, draws_for(var, mtol, 100000, cfg.max_draws), rng);
        x0.add(std::abs(e.via_x0 - truth), where);
        x1.add(std::abs(e.via_x1 - truth), where);
        sym.add(std::abs(e.symmetric - truth), where);
        ++probe;
      }
    }
    out.push_back(closed.finish());
    out.push_back(x0.finish());
    out.push_back(x1.finish());
    out.push_back(sym.finish());
  }

  // ---- SO(2): circle quadrature on 16 angles, then exact posterior sampling ----
  {
    Tracker quad("so2_quadrature", qtol);
    const double sw = 0.3;
    const WrappedMixture noise = WrappedMixture::single(0.0, sw);
    for (double scale : {0.5, 1.0}) {
      const WrappedMixture px{{0.6, 0.4}, {0.0, 2.5}, {scale, 0.5 * scale}, 10};
      const auto py = so2_marginal(px, sw);
      for (int k = 0; k < 16; ++k) {
        const double ty = 2.0 * std::numbers::pi * k / 16.0;
        const double ref = oracle::central_difference([&](double u) { return wrapped_log_density(py, u); }, ty);
        const double e = oracle::circle_posterior_expectation(
            [&](double th) { return so2_tsm_target(px, th, ty); }, [&](double th) { return wrapped_log_density(px, th); },
            [&](double th) { return wrapped_log_density(noise, ty - th); });
        quad.add(std::abs(e - ref), at("two-mode", "scale", scale, ty));
      }
    }
    out.push_back(quad.finish());

    if (!cfg.skip_so2_sampling) {
      Tracker mc("so2_sampling", mtol);
      const auto px = WrappedMixture::single(0.0, 1.0, 10);
      const auto py = so2_marginal(px, sw);
      std::uint64_t probe = 0;
      for (double ty : {0.5, std::numbers::pi, 5.0}) {
        auto run = [&](std::size_t n, std::uint64_t stream, double& var) {
          Rng rng = Rng::substream(cfg.seed, {4, probe, stream});
          const auto xs = so2_posterior_sample(px, sw, ty, rng, n);
          double sum = 0.0, sum_sq = 0.0;
          for (double th : xs) {
            const double v = so2_tsm_target(px, th, ty);
            sum += v;
            sum_sq += v * v;
          }
          const double nn = static_cast<double>(n), m = sum / nn;
          var = std::max(0.0, (sum_sq - nn * m * m) / (nn - 1.0));
          return m;
        };
        double var = 0.0;
        run(100000, 0, var);
        const double est = run(draws_for(var, mtol, 100000, cfg.max_draws), 1, var);
        const double ref = oracle::central_difference([&](double u) { return wrapped_log_density(py, u); }, ty);
        mc.add(std::abs(est - ref), at("wrapped unit", "sigma_w", sw, ty));
        ++probe;
      }
      out.push_back(mc.finish());
    }
  }
  return out;
}

}  // namespace tsm
