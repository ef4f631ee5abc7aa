#include <doctest.h>

#include "tsm/analytic.hpp"
#include "tsm/oracle.hpp"

#include <algorithm>
#include <cmath>

using namespace tsm;

namespace {
Vec v1(double x) { return Vec::Constant(1, x); }
}

TEST_SUITE("analytic") {

TEST_CASE("marginal at the endpoints") {
  const Schedule s;
  const auto p = benchmark_target(BenchmarkTarget::gentle_mixture);
  const auto m0 = marginal_at(p, s, 0.0).marginal;
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(m0.means[i] == p.means[i]);
    CHECK(m0.scales[i] == p.scales[i]);
  }
  const auto m1 = marginal_at(p, s, 1.0).marginal;
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(m1.means[i][0] == 0.0);
    CHECK(m1.scales[i] == 1.0);
  }
  const auto g = benchmark_target(BenchmarkTarget::unit_gaussian);
  for (double t : {0.1, 0.37, 0.8}) CHECK(marginal_at(g, s, t).marginal.scales[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("posterior limits and Gaussian conjugacy") {
  const Schedule s;
  const auto g = benchmark_target(BenchmarkTarget::unit_gaussian);
  const auto lo = posterior(g, s, s.t_min, v1(0.7));
  CHECK(std::abs(lo.means[0][0] - 0.7) <= 1e-2);
  CHECK(lo.scales[0] <= 2e-3);

  for (auto b : kAllBenchmarks) {
    const auto p = benchmark_target(b);
    const auto hi = posterior(p, s, s.t_max, v1(0.0));
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(std::abs(hi.weights[i] - p.weights[i]) <= 1e-2);
      CHECK(std::abs(hi.means[i][0] - p.means[i][0]) <= 1e-2);
    }
  }

  for (double t : {0.05, 0.5, 0.9}) {
    const auto [a, sg] = alpha_sigma(s, t);
    const auto post = posterior(g, s, t, v1(1.3));
    CHECK(post.means[0][0] == doctest::Approx(a * 1.3).epsilon(1e-14));
    CHECK(post.scales[0] == doctest::Approx(sg).epsilon(1e-14));
  }
  CHECK_THROWS_AS(posterior(g, s, 0.0, v1(0.0)), std::domain_error);
}

TEST_CASE("posterior weights are normalized and variances non-negative") {
  const Schedule s;
  Rng rng(4);
  for (auto b : kAllBenchmarks) {
    const auto p = benchmark_target(b);
    for (int k = 0; k < 50; ++k) {
      const double t = rng.uniform(s.t_min, s.t_max);
      const auto post = posterior(p, s, t, v1(3 * rng.normal()));
      double total = 0.0;
      for (double w : post.weights) total += w;
      CHECK(std::abs(total - 1.0) <= 1e-12);
      for (double sc : post.scales) CHECK(sc >= 0.0);
    }
  }
}

TEST_CASE("true score") {
  const Schedule s;
  const auto g = benchmark_target(BenchmarkTarget::unit_gaussian);
  for (double t : {0.0, 0.3, 1.0}) CHECK(true_score(g, s, t, v1(0.8))[0] == doctest::Approx(-0.8).epsilon(1e-15));
  const auto sym = MixtureSpec::scalar({0.5, 0.5}, {-1.0, 1.0}, {0.4, 0.4});
  CHECK(std::abs(true_score(sym, s, 0.4, v1(0.0))[0]) <= 1e-15);
  // Convolution score by 30-digit adaptive quadrature.
  const auto gentle = benchmark_target(BenchmarkTarget::gentle_mixture);
  CHECK(std::abs(true_score(gentle, s, 0.3, v1(0.5))[0] - -0.0593002186368971348) <= 1e-6);
}

TEST_CASE("posterior moments match quadrature") {
  const Schedule s;
  const auto gentle = benchmark_target(BenchmarkTarget::gentle_mixture);
  const auto post = posterior(gentle, s, 0.3, v1(0.5));
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < post.size(); ++i) {
    const double mu = post.means[i][0];
    m1 += post.weights[i] * mu;
    m2 += post.weights[i] * (mu * mu + post.scales[i] * post.scales[i]);
  }
  // Reference moments from 30-digit adaptive quadrature.
  CHECK(std::abs(m1 - 0.547445809234808628) <= 1e-5);
  CHECK(std::abs(m2 - m1 * m1 - 0.185646223294248268) <= 1e-5);

  // Cross-check with the in-repo quadrature at several (t, x_t) for every target.
  for (auto b : kAllBenchmarks) {
    const auto p = benchmark_target(b);
    for (double t : {0.05, 0.4, 0.8}) {
      for (double y : {-1.1, 0.2, 1.7}) {
        const auto [a, sg] = alpha_sigma(s, t);
        auto prior = [&](double x) { return std::exp(log_density(p, v1(x))); };
        auto lik = [&](double yy, double x) { return std::exp(-0.5 * (yy - a * x) * (yy - a * x) / (sg * sg)); };
        const auto w = oracle::additive_window(p, a, sg, y);
        const double q1 = oracle::quad_posterior_expectation([](double x) { return x; }, prior, lik, y, w);
        const double q2 = oracle::quad_posterior_expectation([](double x) { return x * x; }, prior, lik, y, w);
        const auto post2 = posterior(p, s, t, v1(y));
        double e1 = 0.0, e2 = 0.0;
        for (std::size_t i = 0; i < post2.size(); ++i) {
          const double mu = post2.means[i][0];
          e1 += post2.weights[i] * mu;
          e2 += post2.weights[i] * (mu * mu + post2.scales[i] * post2.scales[i]);
        }
        CHECK(std::abs(e1 - q1) <= 1e-5);
        CHECK(std::abs((e2 - e1 * e1) - (q2 - q1 * q1)) <= 1e-5);
      }
    }
  }
}

TEST_CASE("posterior sampling") {
  const Schedule s;
  const auto g = benchmark_target(BenchmarkTarget::unit_gaussian);
  Rng rng(21);
  const std::size_t n = 20000;
  for (double t : {0.2, 0.6}) {
    const auto [a, sg] = alpha_sigma(s, t);
    const Mat x = posterior_sample(g, s, t, v1(0.9), rng, n);
    CHECK(std::abs(x.mean() - a * 0.9) <= 3 * sg / std::sqrt(double(n)));
  }
  const Mat near = posterior_sample(g, s, s.t_min, v1(0.9), rng, 5000);
  CHECK((near.array() - 0.9).abs().maxCoeff() <= 0.05);
  Rng a(9), b(9);
  CHECK(posterior_sample(g, s, 0.4, v1(0.1), a, 100) == posterior_sample(g, s, 0.4, v1(0.1), b, 100));
}

TEST_CASE("tower property of the denoising and target integrands") {
  // For each point, z = (posterior average of L - true score) / s.e. With
  // 800 points some |z| > 3 are expected by chance, so the check bounds the
  // exceedance count (binomial tail) and the maximum |z| (Bonferroni).
  const Schedule s;
  const std::size_t n = 100000;
  int points = 0, exceed = 0;
  double max_z = 0.0;
  Rng rng(77);
  const auto grid = std::vector<double>{0.02, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.95};
  for (auto b : kAllBenchmarks) {
    const auto p = benchmark_target(b);
    for (double t : grid) {
      const auto [a, sg] = alpha_sigma(s, t);
      for (int j = 0; j < 20; ++j) {
        const Vec x_t = a * sample_one(p, rng) + sg * v1(rng.normal());
        const double truth = true_score(p, s, t, x_t)[0];
        const Mat draws = posterior_sample(p, s, t, x_t, rng, n);
        for (int kind = 0; kind < 2; ++kind) {
          double sum = 0.0, sq = 0.0;
          for (Eigen::Index r = 0; r < draws.rows(); ++r) {
            const Vec x0 = draws.row(r).transpose();
            const double l = kind == 0 ? (a * x0[0] - x_t[0]) / (sg * sg) : score(p, x0)[0] / a;
            sum += l - truth;
            sq += (l - truth) * (l - truth);
          }
          const double mean = sum / n;
          const double se = std::sqrt((sq / n - mean * mean) / (n - 1));
          const double z = se > 0 ? std::abs(mean) / se : 0.0;
          ++points;
          if (z > 3.0) ++exceed;
          max_z = std::max(max_z, z);
        }
      }
    }
  }
  CHECK(points == 1600);
  // P(|z| > 3) = 0.0027 -> mean 4.3 exceedances; 14 is past the 99.99% quantile.
  CHECK(exceed <= 14);
  CHECK(max_z <= 5.2);
}

}
