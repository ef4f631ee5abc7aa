#include "tsm/dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace tsm {

namespace {

void check_dim(const MixtureSpec& p, const Vec& x, const char* op) {
  if (static_cast<std::size_t>(x.size()) != p.dim) {
    throw std::invalid_argument(std::string(op) + ": point has dimension " + std::to_string(x.size()) +
                                ", mixture has dimension " + std::to_string(p.dim));
  }
}

// log pi_i + log N(x; mu_i, s_i^2 I) for every component.
std::vector<double> component_log_terms(const MixtureSpec& p, const Vec& x) {
  const double d = static_cast<double>(p.dim);
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double var = p.scales[i] * p.scales[i];
    out[i] = std::log(p.weights[i]) - 0.5 * d * std::log(2.0 * std::numbers::pi * var) -
             (x - p.means[i]).squaredNorm() / (2.0 * var);
  }
  return out;
}

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double a : v) s += std::exp(a - m);
  return m + std::log(s);
}

}  // namespace

void MixtureSpec::validate() const {
  std::ostringstream err;
  const std::size_t n = weights.size();
  if (dim == 0) err << "dim must be positive; ";
  if (n == 0) err << "weights must be non-empty; ";
  if (means.size() != n) err << "means has " << means.size() << " entries, weights has " << n << "; ";
  if (scales.size() != n) err << "scales has " << scales.size() << " entries, weights has " << n << "; ";
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(weights[i] > 0.0)) err << "weights[" << i << "] must be positive; ";
    total += weights[i];
  }
  if (n > 0 && std::abs(total - 1.0) > 1e-12) err << "weights must sum to 1 (sum = " << total << "); ";
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (!(scales[i] > 0.0)) err << "scales[" << i << "] must be positive; ";
  }
  for (std::size_t i = 0; i < means.size(); ++i) {
    if (static_cast<std::size_t>(means[i].size()) != dim) err << "means[" << i << "] has wrong dimension; ";
  }
  if (!err.str().empty()) throw std::invalid_argument("invalid mixture: " + err.str());
}

MixtureSpec MixtureSpec::gaussian(const Vec& mean, double scale) {
  MixtureSpec p{static_cast<std::size_t>(mean.size()), {1.0}, {mean}, {scale}};
  p.validate();
  return p;
}

MixtureSpec MixtureSpec::scalar(std::vector<double> weights, const std::vector<double>& means,
                                std::vector<double> scales) {
  MixtureSpec p;
  p.dim = 1;
  p.weights = std::move(weights);
  p.scales = std::move(scales);
  for (double m : means) p.means.push_back(Vec::Constant(1, m));
  p.validate();
  return p;
}

double log_density(const MixtureSpec& p, const Vec& x) {
  check_dim(p, x, "log_density");
  return log_sum_exp(component_log_terms(p, x));
}

std::vector<double> responsibilities(const MixtureSpec& p, const Vec& x) {
  check_dim(p, x, "responsibilities");
  std::vector<double> r = component_log_terms(p, x);
  const double lse = log_sum_exp(r);
  for (double& v : r) v = std::exp(v - lse);
  return r;
}

Vec score(const MixtureSpec& p, const Vec& x) {
  check_dim(p, x, "score");
  if (p.size() == 1) return (p.means[0] - x) / (p.scales[0] * p.scales[0]);
  const std::vector<double> r = responsibilities(p, x);
  Vec s = Vec::Zero(static_cast<Eigen::Index>(p.dim));
  for (std::size_t i = 0; i < p.size(); ++i) {
    s += r[i] * (p.means[i] - x) / (p.scales[i] * p.scales[i]);
  }
  return s;
}

Vec sample_one(const MixtureSpec& p, Rng& rng) {
  const std::size_t i = rng.categorical(p.weights);
  Vec x(static_cast<Eigen::Index>(p.dim));
  for (Eigen::Index c = 0; c < x.size(); ++c) x[c] = p.means[i][c] + p.scales[i] * rng.normal();
  return x;
}

Mat sample(const MixtureSpec& p, Rng& rng, std::size_t n) {
  Mat out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p.dim));
  for (std::size_t k = 0; k < n; ++k) out.row(static_cast<Eigen::Index>(k)) = sample_one(p, rng).transpose();
  return out;
}

Moments moments(const MixtureSpec& p) {
  double mode = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) mode += p.weights[i] * p.scales[i] * p.scales[i];
  double total = 0.0;
  for (std::size_t c = 0; c < p.dim; ++c) {
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double mu = p.means[i][static_cast<Eigen::Index>(c)];
      m1 += p.weights[i] * mu;
      m2 += p.weights[i] * (p.scales[i] * p.scales[i] + mu * mu);
    }
    total += m2 - m1 * m1;
  }
  return {total / static_cast<double>(p.dim), mode};
}

MixtureSpec rescaled(MixtureSpec p, double factor) {
  for (auto& m : p.means) m *= factor;
  for (auto& s : p.scales) s *= factor;
  return p;
}

MixtureSpec normalized_to_unit_variance(const MixtureSpec& p) {
  return rescaled(p, 1.0 / std::sqrt(moments(p).total_variance));
}

MixtureSpec benchmark_target(BenchmarkTarget which) {
  switch (which) {
    case BenchmarkTarget::unit_gaussian:
      return MixtureSpec::scalar({1.0}, {0.0}, {1.0});
    case BenchmarkTarget::gentle_mixture:
      return normalized_to_unit_variance(MixtureSpec::scalar({0.4, 0.6}, {-1.2, 0.8}, {0.7, 0.7}));
    case BenchmarkTarget::hard_mixture_same_var:
      return normalized_to_unit_variance(MixtureSpec::scalar({0.5, 0.5}, {-4.0, 4.0}, {0.5, 0.5}));
    case BenchmarkTarget::hard_mixture_diff_var:
      return normalized_to_unit_variance(MixtureSpec::scalar({0.5, 0.5}, {-4.0, 4.0}, {0.25, 1.0}));
  }
  throw std::logic_error("unknown benchmark target");
}

BenchmarkTarget parse_benchmark(std::string_view name) {
  for (BenchmarkTarget b : kAllBenchmarks) {
    if (to_string(b) == name) return b;
  }
  throw std::invalid_argument("unknown benchmark target '" + std::string(name) + "'");
}

std::string_view to_string(BenchmarkTarget which) {
  switch (which) {
    case BenchmarkTarget::unit_gaussian: return "unit_gaussian";
    case BenchmarkTarget::gentle_mixture: return "gentle_mixture";
    case BenchmarkTarget::hard_mixture_same_var: return "hard_mixture_same_var";
    case BenchmarkTarget::hard_mixture_diff_var: return "hard_mixture_diff_var";
  }
  return "?";
}

MixtureSpec two_mode_planar_target() {
  MixtureSpec p;
  p.dim = 2;
  p.weights = {0.5, 0.5};
  p.means = {Eigen::Vector2d(-1.5, 0.0), Eigen::Vector2d(1.5, 0.0)};
  p.scales = {0.5, 0.5};
  p.validate();
  return normalized_to_unit_variance(p);
}

}  // namespace tsm
