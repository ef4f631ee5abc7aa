#include <doctest.h>

#include "tsm/analytic.hpp"
#include "tsm/sampler.hpp"

#include <cmath>

using namespace tsm;

namespace {
BatchScoreFn exact_score(const MixtureSpec& p, const Schedule& s) {
  return [p, s](const Mat& x, double t) {
    Mat out(x.rows(), x.cols());
    const auto m = marginal_at(p, s, t).marginal;
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = score(m, x.row(i).transpose()).transpose();
    return out;
  };
}

std::vector<double> column(const Mat& m) { return std::vector<double>(m.data(), m.data() + m.rows()); }
}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("reverse SDE with the exact score preserves the unit Gaussian") {
  const Schedule s;
  const MixtureSpec g = MixtureSpec::gaussian(Vec::Zero(2), 1.0);
  auto cfg = SamplerConfig::for_schedule(s);
  cfg.seed = 1;
  // A 0.02 bound on the mean is only two standard errors at 10^4 draws, so the
  // mean is checked at 2 x 10^5 draws where it is a nine-sigma bound.
  const Mat x = reverse_sample(exact_score(g, s), s, cfg, 200000, 2);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  CHECK(mean.cwiseAbs().maxCoeff() <= 0.02);
  const Mat head = x.topRows(10000);
  const Eigen::RowVectorXd hm = head.colwise().mean();
  const Mat c = (head.rowwise() - hm).transpose() * (head.rowwise() - hm) / double(head.rows() - 1);
  CHECK((c - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() <= 0.05);
}

TEST_CASE("reverse SDE reproduces a mixture") {
  const Schedule s;
  const auto p = benchmark_target(BenchmarkTarget::gentle_mixture);
  Rng rng(2);
  const Mat direct = sample(p, rng, 1000000);
  auto cfg = SamplerConfig::for_schedule(s);
  cfg.seed = 3;
  const Mat a = reverse_sample(exact_score(p, s), s, cfg, 10000, 1);
  const double ks1 = ks_statistic(column(a), column(direct));
  CHECK(ks1 <= 0.02);
  cfg.steps = 2000;
  const Mat b = reverse_sample(exact_score(p, s), s, cfg, 10000, 1);
  const double ks2 = ks_statistic(column(b), column(direct));
  // Null KS at n = 10^4 has standard deviation of about 0.004.
  CHECK(ks2 <= ks1 + 0.01);
}

TEST_CASE("sampler is reproducible and independent of the worker count") {
  const Schedule s;
  const auto p = benchmark_target(BenchmarkTarget::gentle_mixture);
  auto cfg = SamplerConfig::for_schedule(s);
  cfg.steps = 50;
  cfg.seed = 8;
  cfg.workers = 1;
  const Mat a = reverse_sample(exact_score(p, s), s, cfg, 600, 1);
  cfg.workers = 3;
  const Mat b = reverse_sample(exact_score(p, s), s, cfg, 600, 1);
  CHECK(a == b);
  cfg.steps = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("divergent score is reported") {
  const Schedule s;
  auto cfg = SamplerConfig::for_schedule(s);
  cfg.steps = 10;
  const BatchScoreFn bad = [](const Mat& x, double) { return Mat(x.array() * 1e308 * 1e308); };
  CHECK_THROWS_AS(reverse_sample(bad, s, cfg, 10, 1), DivergenceError);
}

TEST_CASE("mmd2") {
  Rng rng(4);
  const auto g = MixtureSpec::scalar({1.0}, {0.0}, {1.0});
  const auto far = MixtureSpec::scalar({1.0}, {5.0}, {1.0});
  const Mat a = sample(g, rng, 2000), b = sample(g, rng, 2000), c = sample(far, rng, 2000);
  CHECK(std::abs(mmd2(a, b)) <= 0.01);
  CHECK(mmd2(a, c) >= 0.5);
  CHECK(mmd2(a, c) == mmd2(c, a));
  CHECK(mmd2(a, b, 0.7) == mmd2(b, a, 0.7));
  Mat a_perm = a;
  a_perm.row(0).swap(a_perm.row(1999));
  CHECK(mmd2(a_perm, c) == doctest::Approx(mmd2(a, c)).epsilon(1e-12));
  const Mat same = Mat::Constant(10, 1, 3.0);
  CHECK_THROWS_AS(mmd2(same, same), std::invalid_argument);
  CHECK_THROWS_AS(mmd2(a.topRows(1), b), std::invalid_argument);
}

TEST_CASE("median pairwise distance and KS") {
  Mat x(4, 1);
  x << 0, 1, 3, 6;  // distances 1 2 3 3 5 6
  CHECK(median_pairwise_distance(x) == 3.0);
  const std::vector<double> a = {1, 2, 3}, b = {4, 5, 6};
  CHECK(ks_statistic(a, b) == 1.0);
  CHECK(ks_statistic(a, a) == 0.0);
}

}
