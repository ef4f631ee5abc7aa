#include <doctest.h>

#include "tsm/targets.hpp"

#include <cmath>
#include <limits>
#include <numbers>

using namespace tsm;

namespace {
Vec v1(double x) { return Vec::Constant(1, x); }
double tan2(double t) { const double v = std::tan(std::numbers::pi * t / 2); return v * v; }
double cot2(double t) { return 1.0 / tan2(t); }
}  // namespace

TEST_SUITE("targets") {

TEST_CASE("target values") {
  const Schedule s;
  const auto g = benchmark_target(BenchmarkTarget::unit_gaussian);
  const auto gentle = benchmark_target(BenchmarkTarget::gentle_mixture);
  CHECK(target_value(ScoreTargetKind::dsi(), g, s, v1(1.0), v1(0.2), 0.5)[0] ==
        doctest::Approx(1.01421356237309503).epsilon(1e-14));
  const double near = target_value(ScoreTargetKind::tsi(), gentle, s, v1(0.4), v1(0.4), s.t_min)[0];
  CHECK(near == doctest::Approx(score(gentle, v1(0.4))[0]).epsilon(1e-5));
  Rng rng(2);
  for (int k = 0; k < 100; ++k) {
    const double t = rng.uniform(s.t_min, s.t_max);
    const double xt = 2 * rng.normal();
    const double a = target_value(ScoreTargetKind::kappa(), g, s, v1(3 * rng.normal()), v1(xt), t)[0];
    CHECK(std::abs(a + xt) <= 1e-12 * std::max(1.0, std::abs(xt)));
  }
  CHECK_THROWS_AS(target_value(ScoreTargetKind::dsi(), g, s, v1(0), v1(0), 0.0), std::domain_error);
}

TEST_CASE("phillips and mixture identities") {
  const Schedule s;
  Rng rng(3);
  const auto w1 = ScoreTargetKind::mix([](double) { return 1.0; });
  const auto w0 = ScoreTargetKind::mix([](double) { return 0.0; });
  for (auto b : kAllBenchmarks) {
    const auto p = benchmark_target(b);
    const ScoreTarget dsi(ScoreTargetKind::dsi(), p, s), tsi(ScoreTargetKind::tsi(), p, s);
    const ScoreTarget ph(ScoreTargetKind::phillips(), p, s), m1(w1, p, s), m0(w0, p, s);
    for (int k = 0; k < 50; ++k) {
      const double t = rng.uniform(s.t_min, s.t_max);
      const auto [a, sg] = alpha_sigma(s, t);
      const Vec x0 = sample_one(p, rng);
      const Vec xt = a * x0 + sg * v1(rng.normal());
      const double expect = a * a * tsi.value(x0, xt, t)[0] + (1 - a * a) * dsi.value(x0, xt, t)[0];
      const double got = ph.value(x0, xt, t)[0];
      CHECK(std::abs(got - expect) <= 1e-12 * std::max(1.0, std::abs(expect)));
      CHECK(m1.value(x0, xt, t) == dsi.value(x0, xt, t));
      CHECK(m0.value(x0, xt, t) == tsi.value(x0, xt, t));
    }
  }
}

TEST_CASE("kappa and kappa_bar") {
  const Schedule s;
  CHECK(kappa(0.0, 1.0, s) == 0.0);
  CHECK(kappa(1.0, 1.0, s) == 1.0);
  CHECK(kappa(0.5, 1.0, s) == doctest::Approx(0.5).epsilon(1e-15));
  for (int k = 0; k <= 100; ++k) {
    const double t = k / 100.0;
    const double sn = std::sin(std::numbers::pi * t / 2);
    CHECK(std::abs(kappa(t, 1.0, s) - sn * sn) <= 1e-15);
  }
  const auto g = benchmark_target(BenchmarkTarget::unit_gaussian);
  const auto hard = benchmark_target(BenchmarkTarget::hard_mixture_same_var);
  for (int k = 0; k <= 100; ++k) {
    const double t = k / 100.0;
    CHECK(kappa_bar(t, g, s) == kappa(t, 1.0, s));
    CHECK(kappa_bar(t, hard, s) >= kappa(t, moments(hard).total_variance, s));
  }
  for (auto b : kAllBenchmarks) CHECK(kappa_bar(1.0, benchmark_target(b), s) == 1.0);
  CHECK_THROWS_AS(kappa(0.3, 0.0, s), std::invalid_argument);
}

TEST_CASE("parse target kinds") {
  CHECK(parse_target_kind("kappa_bar").variant == TargetVariant::kappa_bar);
  const auto m = parse_target_kind("mix:0.25");
  CHECK(m.variant == TargetVariant::mix);
  CHECK(m.mix_weight(0.7) == 0.25);
  CHECK(m.name() == "mix:0.25");
  CHECK_THROWS_AS(parse_target_kind("mix:1.5"), std::invalid_argument);
  CHECK_THROWS_AS(parse_target_kind("mix:abc"), std::invalid_argument);
  CHECK_THROWS_AS(parse_target_kind("dsm"), std::invalid_argument);
}

TEST_CASE("Monte Carlo score on the unit Gaussian") {
  const Schedule s;
  const auto g = benchmark_target(BenchmarkTarget::unit_gaussian);
  Rng rng(12);
  const auto k = mc_score(ScoreTargetKind::kappa(), g, s, v1(0.8), 0.37, 100, rng);
  CHECK(std::abs(k.estimate[0] + 0.8) <= 1e-12);
  CHECK(k.variance_sum <= 1e-12);
  const auto d = mc_score(ScoreTargetKind::dsi(), g, s, v1(0.4), 0.5, 10000, rng);
  CHECK(d.variance_sum == doctest::Approx(cot2(0.5)).epsilon(0.1));
  // Posterior N(alpha y, sigma^2) makes Var(x0 / alpha) = sigma^2 / alpha^2 = tan^2.
  const auto t = mc_score(ScoreTargetKind::tsi(), g, s, v1(0.4), 0.5, 10000, rng);
  CHECK(t.variance_sum == doctest::Approx(tan2(0.5)).epsilon(0.1));
  const auto t2 = mc_score(ScoreTargetKind::tsi(), g, s, v1(-1.0), 0.8, 10000, rng);
  CHECK(t2.variance_sum == doctest::Approx(tan2(0.8)).epsilon(0.1));
  CHECK_THROWS_AS(mc_score(ScoreTargetKind::dsi(), g, s, v1(0), 0.5, 1, rng), std::invalid_argument);
}

TEST_CASE("every target kind is unbiased for the true score") {
  const Schedule s;
  const std::vector<ScoreTargetKind> kinds = {ScoreTargetKind::dsi(), ScoreTargetKind::tsi(),
                                              ScoreTargetKind::kappa(), ScoreTargetKind::kappa_bar(),
                                              ScoreTargetKind::phillips(), parse_target_kind("mix:0.3")};
  Rng rng(31);
  const std::size_t n = 100000;
  for (auto b : kAllBenchmarks) {
    const auto p = benchmark_target(b);
    for (double t : {0.05, 0.25, 0.5, 0.75, 0.95}) {
      const auto [a, sg] = alpha_sigma(s, t);
      const Vec xt = a * sample_one(p, rng) + sg * v1(rng.normal());
      const double truth = true_score(p, s, t, xt)[0];
      for (const auto& k : kinds) {
        const auto est = mc_score(k, p, s, xt, t, n, rng);
        const double se = std::sqrt(est.variance_sum / n);
        INFO(to_string(b), " t=", t, " kind=", k.name());
        CHECK(std::abs(est.estimate[0] - truth) <= 4 * se + 1e-12);
      }
    }
  }
}

TEST_CASE("self-normalized importance sampling") {
  const auto g = benchmark_target(BenchmarkTarget::unit_gaussian);
  Rng rng(40);
  const auto r = snis_score(g, v1(0.3), 0.05, 100000, rng);
  const double truth = -0.3 / (1 + 0.05 * 0.05);
  CHECK(std::abs(r.estimate[0] - truth) <= 3 * r.std_error[0]);

  const auto flat = MixtureSpec::scalar({1.0}, {0.0}, {100.0});
  const auto f = snis_score(flat, v1(0.5), 1.0, 10000, rng);
  CHECK(std::abs(f.estimate[0]) <= 1e-3);

  const auto hard = benchmark_target(BenchmarkTarget::hard_mixture_same_var);
  const auto h = snis_score(hard, v1(0.2), 2.0, 5000, rng);
  CHECK(std::isfinite(h.estimate[0]));
  CHECK(h.ess < 5000.0);
  CHECK(h.ess >= 1.0);

  CHECK_THROWS_AS(snis_score(g, v1(std::numeric_limits<double>::infinity()), 1.0, 100, rng),
                  WeightDegeneracyError);
  CHECK_THROWS_AS(snis_score(g, v1(0.0), 0.0, 100, rng), std::invalid_argument);
}

TEST_CASE("variance study on the unit Gaussian") {
  const Schedule s;
  const auto g = benchmark_target(BenchmarkTarget::unit_gaussian);
  VarianceStudyConfig cfg;
  cfg.n_outer = 200;
  cfg.n_inner = 100;
  cfg.seed = 5;
  const auto rows = variance_study(g, s, {ScoreTargetKind::kappa(), ScoreTargetKind::kappa_bar()}, cfg);
  CHECK(rows.size() == 100);
  for (const auto& r : rows) CHECK(r.mean_variance <= 1e-12);

  cfg.n_outer = 1000;
  cfg.t_grid = {0.01, 0.2, 0.5, 0.8, 0.99};
  const auto d = variance_study(g, s, {ScoreTargetKind::dsi(), ScoreTargetKind::tsi()}, cfg);
  REQUIRE(d.size() == 10);
  CHECK(d[0].kind == "dsi");
  CHECK(d[0].mean_variance > 1e3 * d[4].mean_variance);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(d[2 * i].mean_variance == doctest::Approx(cot2(cfg.t_grid[i])).epsilon(0.1));
    CHECK(d[2 * i + 1].mean_variance == doctest::Approx(tan2(cfg.t_grid[i])).epsilon(0.1));
  }
}

TEST_CASE("variance study is independent of the worker count") {
  const Schedule s;
  VarianceStudyConfig cfg;
  cfg.n_outer = 40;
  cfg.n_inner = 20;
  cfg.t_grid = {0.1, 0.6};
  cfg.seed = 99;
  const auto p = benchmark_target(BenchmarkTarget::hard_mixture_diff_var);
  const std::vector<ScoreTargetKind> kinds = {ScoreTargetKind::dsi(), ScoreTargetKind::kappa_bar()};
  cfg.workers = 1;
  const auto a = variance_study(p, s, kinds, cfg);
  cfg.workers = 3;
  const auto b = variance_study(p, s, kinds, cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].mean_variance == b[i].mean_variance);

  cfg.n_inner = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

}
