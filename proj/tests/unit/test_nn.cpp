#include <doctest.h>

#include "tsm/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace tsm;
using namespace tsm::nn;

namespace {

ModelLayout layout(std::size_t d, std::size_t e, std::vector<std::size_t> h, Activation a) {
  ModelLayout l;
  l.input_dim = d;
  l.embed_dim = e;
  l.hidden = std::move(h);
  l.activation = a;
  return l;
}

struct Problem {
  Mat x;
  std::vector<double> t;
  Mat targets;
  std::vector<double> w;
};

Problem random_problem(std::size_t d, std::size_t n, Rng& rng) {
  Problem p;
  p.x.resize(n, d);
  p.targets.resize(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      p.x(i, c) = rng.normal();
      p.targets(i, c) = rng.normal();
    }
    p.t.push_back(rng.uniform(0.001, 0.999));
    p.w.push_back(rng.uniform(0.5, 2.0));
  }
  return p;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("time embedding") {
  const Vec e0 = time_embedding(0.0, 128);
  CHECK(e0.head(64).cwiseAbs().maxCoeff() == 0.0);
  CHECK((e0.tail(64).array() == 1.0).all());
  for (double t : {0.0, 0.123, 0.5, 1.0}) CHECK(time_embedding(t, 128).squaredNorm() == doctest::Approx(64.0).epsilon(1e-13));
  CHECK_THROWS_AS(time_embedding(0.5, 7), std::invalid_argument);
  CHECK_THROWS_AS(time_embedding(1.5, 8), std::domain_error);
}

TEST_CASE("time embedding is injective on a fine grid") {
  const int n = 10000;
  Mat e(128, n);
  for (int k = 0; k < n; ++k) e.col(k) = time_embedding(k / double(n - 1), 128);
  // ||a - b||^2 = 128 - 2 a.b since every embedding has squared norm 64.
  double min_d2 = 1e300;
  const int block = 500;
  for (int b0 = 0; b0 < n; b0 += block) {
    const Mat g = e.middleCols(b0, block).transpose() * e;
    for (int i = 0; i < block; ++i) {
      for (int j = b0 + i + 1; j < n; ++j) min_d2 = std::min(min_d2, 128.0 - 2.0 * g(i, j));
    }
  }
  CHECK(min_d2 > 1e-6);  // far above 1e-18, the square of the required 1e-9 separation
}

TEST_CASE("forward basics") {
  ScoreModel zero(ModelLayout{});
  CHECK(zero.parameters().size() == ModelLayout{}.parameter_count());
  CHECK(zero.forward(Eigen::Vector2d(0.3, -1.0), 0.4).norm() == 0.0);

  ScoreModel m(ModelLayout{});
  Rng rng(1);
  m.initialize(rng);
  const Vec x = Eigen::Vector2d(0.3, -1.0);
  CHECK(m.forward(x, 0.4) == m.forward(x, 0.4));
  CHECK(m.forward(x, 0.4).size() == 2);
  for (int seed = 0; seed < 10; ++seed) {
    ScoreModel r(ModelLayout{});
    Rng g(seed);
    r.initialize(g);
    double change = 0.0;
    for (int k = 1; k <= 10; ++k) change = std::max(change, (r.forward(x, k / 10.0) - r.forward(x, 0.0)).norm());
    CHECK(change > 0.0);
  }
  // Batched and single evaluations agree.
  Mat xb(3, 2);
  xb << 0.1, 0.2, -0.5, 1.0, 2.0, -2.0;
  const std::vector<double> ts = {0.1, 0.5, 0.9};
  const Mat yb = m.forward_batch(xb, ts);
  for (int i = 0; i < 3; ++i) CHECK((yb.row(i).transpose() - m.forward(xb.row(i).transpose(), ts[i])).norm() <= 1e-14);
}

TEST_CASE("layout validation") {
  CHECK_THROWS_AS(ScoreModel(layout(2, 7, {4}, Activation::gelu)), std::invalid_argument);
  CHECK_THROWS_AS(ScoreModel(layout(0, 8, {4}, Activation::gelu)), std::invalid_argument);
  CHECK_THROWS_AS(ScoreModel(layout(2, 8, {}, Activation::gelu)), std::invalid_argument);
  CHECK(layout(2, 4, {3}, Activation::relu).parameter_count() == 3 * 6 + 3 + 2 * 3 + 2);
  CHECK(parse_activation("relu") == Activation::relu);
  CHECK_THROWS_AS(parse_activation("tanh"), std::invalid_argument);
}

TEST_CASE("gradients match finite differences") {
  const ModelLayout layouts[] = {ModelLayout{}, layout(1, 8, {16, 8}, Activation::relu),
                                 layout(3, 16, {32}, Activation::gelu)};
  int arch = 0;
  for (const auto& l : layouts) {
    Rng rng(100 + arch++);
    ScoreModel m(l);
    m.initialize(rng);
    // Non-zero biases so every parameter block is exercised.
    for (double& p : m.parameters()) p += 0.01 * rng.normal();
    const Problem pb = random_problem(l.input_dim, 16, rng);
    const auto lg = loss_and_grad(m, pb.x, pb.t, pb.targets, pb.w);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
      const std::size_t i = static_cast<std::size_t>(rng.uniform() * m.parameters().size());
      const double orig = m.parameters()[i];
      const double h = 1e-6 * std::max(1.0, std::abs(orig));
      m.parameters()[i] = orig + h;
      const double up = loss_and_grad(m, pb.x, pb.t, pb.targets, pb.w).loss;
      m.parameters()[i] = orig - h;
      const double down = loss_and_grad(m, pb.x, pb.t, pb.targets, pb.w).loss;
      m.parameters()[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(lg.grad[i]), 1e-8});
      worst = std::max(worst, std::abs(fd - lg.grad[i]) / denom);
    }
    INFO("architecture ", arch);
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("loss is a mean over the batch") {
  Rng rng(3);
  ScoreModel m(layout(2, 8, {12, 12}, Activation::gelu));
  m.initialize(rng);
  const Problem pb = random_problem(2, 10, rng);
  Problem twice = pb;
  twice.x.resize(20, 2);
  twice.x << pb.x, pb.x;
  twice.targets.resize(20, 2);
  twice.targets << pb.targets, pb.targets;
  twice.t.insert(twice.t.end(), pb.t.begin(), pb.t.end());
  twice.w.insert(twice.w.end(), pb.w.begin(), pb.w.end());
  const auto a = loss_and_grad(m, pb.x, pb.t, pb.targets, pb.w);
  const auto b = loss_and_grad(m, twice.x, twice.t, twice.targets, twice.w);
  CHECK(b.loss == doctest::Approx(a.loss).epsilon(1e-13));
  for (std::size_t i = 0; i < a.grad.size(); ++i) CHECK(std::abs(a.grad[i] - b.grad[i]) <= 1e-13 * (1 + std::abs(a.grad[i])));

  // Targets equal to the network output give zero loss and gradient.
  const Mat out = m.forward_batch(pb.x, pb.t);
  const auto z = loss_and_grad(m, pb.x, pb.t, out, pb.w);
  CHECK(z.loss == 0.0);
  CHECK(*std::max_element(z.grad.begin(), z.grad.end(), [](double u, double v) { return std::abs(u) < std::abs(v); }) == 0.0);
}

TEST_CASE("Adam step") {
  Adam opt(2, 0.1);
  std::vector<double> p = {1.0, -1.0};
  const std::vector<double> g = {0.5, -2.0};
  opt.step(p, g);
  // First bias-corrected step moves each coordinate by lr * sign(g).
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(p[1] == doctest::Approx(-0.9).epsilon(1e-7));
  CHECK_THROWS_AS(Adam(2, 0.0), std::invalid_argument);
}

TEST_CASE("training is deterministic and fits an easy target") {
  const Schedule s;
  TrainConfig cfg;
  cfg.layout.input_dim = 1;  // default width, depth, lr and batch otherwise
  cfg.kind = ScoreTargetKind::kappa();
  cfg.iterations = 100;
  const auto g = benchmark_target(BenchmarkTarget::unit_gaussian);
  double late = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    cfg.seed = seed;
    const auto r = train(g, s, cfg);
    REQUIRE(r.history.total_loss.size() == 100);
    late += r.history.total_loss.back() / 3;
    if (seed == 1) {
      const auto again = train(g, s, cfg);
      CHECK(std::equal(r.model.parameters().begin(), r.model.parameters().end(), again.model.parameters().begin()));
    }
  }
  CHECK(late <= 1e-2);
}

TEST_CASE("denoising loss explodes near t_min") {
  const Schedule s;
  TrainConfig cfg;
  cfg.layout = layout(2, 16, {32, 32}, Activation::gelu);
  cfg.kind = ScoreTargetKind::dsi();
  cfg.iterations = 40;
  cfg.batch_size = 512;
  cfg.seed = 4;
  const auto r = train(two_mode_planar_target(), s, cfg);
  auto bins = r.history.bin_means(0);
  std::vector<double> sorted = bins;
  std::sort(sorted.begin(), sorted.end());
  CHECK(bins.front() >= 10 * sorted[sorted.size() / 2]);
}

TEST_CASE("train callback and validation") {
  const Schedule s;
  TrainConfig cfg;
  cfg.layout = layout(2, 8, {8}, Activation::relu);
  cfg.iterations = 10;
  cfg.batch_size = 16;
  std::vector<std::size_t> seen;
  train(two_mode_planar_target(), s, cfg, [&](std::size_t it, const ScoreModel&) { seen.push_back(it); }, 4);
  CHECK(seen == std::vector<std::size_t>{0, 4, 8, 10});
  cfg.learning_rate = -1;
  CHECK_THROWS_AS(train(two_mode_planar_target(), s, cfg), std::invalid_argument);
  cfg.learning_rate = 1e-4;
  cfg.layout.input_dim = 1;
  CHECK_THROWS_AS(train(two_mode_planar_target(), s, cfg), std::invalid_argument);
}

TEST_CASE("checkpoint round trip") {
  Rng rng(5);
  ScoreModel m(layout(2, 8, {6, 5}, Activation::relu));
  m.initialize(rng);
  const auto path = std::filesystem::temp_directory_path() / "tsm_test_ckpt.bin";
  save_checkpoint(path, m, 1234);
  std::uint64_t it = 0;
  const ScoreModel back = load_checkpoint(path, &it);
  CHECK(it == 1234);
  CHECK(back.layout().hidden == m.layout().hidden);
  CHECK(back.layout().activation == Activation::relu);
  CHECK(std::equal(m.parameters().begin(), m.parameters().end(), back.parameters().begin()));
  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << "garbage";
  }
  CHECK_THROWS(load_checkpoint(path));
  std::filesystem::remove(path);
}

}
