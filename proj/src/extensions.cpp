#include "tsm/extensions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace tsm {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

// ---- general noise ---------------------------------------------------------

GeneralNoiseModel affine_noise_model(double alpha, double sigma, std::size_t dim) {
  if (!(alpha > 0.0) || !(sigma > 0.0)) {
    throw std::invalid_argument("affine_noise_model: alpha and sigma must be positive");
  }
  const auto d = static_cast<Eigen::Index>(dim);
  GeneralNoiseModel m;
  m.phi = [alpha](const Vec& y, const Vec& x) -> Vec { return y - alpha * x; };
  m.phi_inv = [alpha](const Vec& y, const Vec& z) -> Vec { return (y - z) / alpha; };
  m.d1_phi_inv = [alpha, d](const Vec&, const Vec&) -> Mat {
    return Mat::Identity(d, d) * (1.0 / alpha);
  };
  m.logdet_grad = [d](const Vec&, const Vec&) -> Vec { return Vec::Zero(d); };
  m.log_f = [sigma, d](const Vec& z) {
    const double s2 = sigma * sigma;
    return -0.5 * z.squaredNorm() / s2 - 0.5 * static_cast<double>(d) * std::log(kTwoPi * s2);
  };
  return m;
}

double cubic_inverse(double u) {
  if (!std::isfinite(u)) throw std::domain_error("cubic_inverse: non-finite argument");
  // x^3 + x is increasing, so the root is bracketed by [-|u|, |u|] (and by cbrt(u)).
  double lo = -std::max(1.0, std::abs(u));
  double hi = std::max(1.0, std::abs(u));
  double x = std::cbrt(u);
  for (int it = 0; it < 200; ++it) {
    const double f = x * x * x + x - u;
    if (f == 0.0) return x;
    if (f > 0.0) hi = std::min(hi, x); else lo = std::max(lo, x);
    double next = x - f / (3.0 * x * x + 1.0);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-12 * std::max(1.0, std::abs(x))) return next;
    x = next;
  }
  return x;
}

GeneralNoiseModel cubic_noise_model(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("cubic_noise_model: sigma must be positive");
  auto g = [](double x) { return x * x * x + x; };
  GeneralNoiseModel m;
  m.phi = [g](const Vec& y, const Vec& x) -> Vec { return Vec::Constant(1, y[0] - g(x[0])); };
  m.phi_inv = [](const Vec& y, const Vec& z) -> Vec {
    return Vec::Constant(1, cubic_inverse(y[0] - z[0]));
  };
  // h = g^{-1}: h'(u) = 1 / g'(h(u)).
  m.d1_phi_inv = [](const Vec& y, const Vec& z) -> Mat {
    const double x = cubic_inverse(y[0] - z[0]);
    return Mat::Constant(1, 1, 1.0 / (3.0 * x * x + 1.0));
  };
  // log|d/dz h(y - z)| = log h'(y - z); its y-derivative is h''/h' = -g''/g'^2 at x = h(y - z).
  m.logdet_grad = [](const Vec& y, const Vec& z) -> Vec {
    const double x = cubic_inverse(y[0] - z[0]);
    const double gp = 3.0 * x * x + 1.0;
    return Vec::Constant(1, -6.0 * x / (gp * gp));
  };
  m.log_f = [sigma](const Vec& z) {
    const double s2 = sigma * sigma;
    return -0.5 * z[0] * z[0] / s2 - 0.5 * std::log(kTwoPi * s2);
  };
  return m;
}

Vec general_tsi_target(const GeneralNoiseModel& m, const MixtureSpec& p_x, const Vec& x, const Vec& y) {
  const Vec z = m.phi(y, x);
  const Vec back = m.phi_inv(y, z);
  if (back.size() != x.size() ||
      !((back - x).cwiseAbs().array() <= 1e-10 * (1.0 + x.cwiseAbs().array())).all()) {
    throw ModelInconsistencyError("noise model: phi_inv(y, phi(y, x)) does not recover x");
  }
  return m.d1_phi_inv(y, z).transpose() * score(p_x, x) + m.logdet_grad(y, z);
}

// ---- SO(2) -----------------------------------------------------------------

double wrap_angle(double theta) {
  double r = std::fmod(theta, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

void WrappedMixture::validate() const {
  std::ostringstream err;
  const std::size_t n = weights.size();
  if (n == 0) err << "mixture needs at least one component; ";
  if (means.size() != n || scales.size() != n) err << "weights, means and scales differ in length; ";
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) err << "weights must be non-negative; ";
    total += w;
  }
  if (n > 0 && std::abs(total - 1.0) > 1e-9) err << "weights must sum to 1; ";
  for (double s : scales) {
    if (!(s > 0.0) || !std::isfinite(s)) err << "scales must be positive and finite; ";
  }
  for (double m : means) {
    if (!std::isfinite(m)) err << "means must be finite; ";
  }
  if (truncation < 1) err << "truncation must be at least 1; ";
  if (!err.str().empty()) throw std::invalid_argument("WrappedMixture: " + err.str());
}

WrappedMixture WrappedMixture::single(double mean, double scale, int truncation) {
  WrappedMixture w{{1.0}, {wrap_angle(mean)}, {scale}, truncation};
  w.validate();
  return w;
}

namespace {

// Above this scale the Fourier form converges faster than the angular sum.
constexpr double kFourierScale = 2.0;

struct ComponentEval {
  double log_density;
  double dlog;  // d/dtheta log density
};

ComponentEval component(double mean, double s, int k_max, double theta) {
  double d = std::remainder(theta - mean, kTwoPi);  // in [-pi, pi]
  if (s <= kFourierScale) {
    // |d| <= pi, so k = 0 is the largest term; translates whose relative
    // weight underflows are skipped since they add exactly zero.
    const double s2 = s * s;
    const double max_e = -0.5 * d * d / s2;
    double sum = 1.0;
    double dsum = -d / s2;
    for (int k = 1; k <= k_max; ++k) {
      bool any = false;
      for (int sign : {-1, 1}) {
        const double u = d + kTwoPi * k * sign;
        const double ex = -0.5 * u * u / s2 - max_e;
        if (ex < -746.0) continue;
        const double e = std::exp(ex);
        sum += e;
        dsum += -u / s2 * e;
        any = true;
      }
      if (!any) break;
    }
    return {max_e + std::log(sum) - 0.5 * std::log(kTwoPi * s2), dsum / sum};
  }
  double sum = 1.0;
  double dsum = 0.0;
  for (int n = 1; n <= k_max; ++n) {
    const double rho = std::exp(-0.5 * n * n * s * s);
    sum += 2.0 * rho * std::cos(n * d);
    dsum += -2.0 * n * rho * std::sin(n * d);
  }
  return {std::log(sum) - std::log(kTwoPi), dsum / sum};
}

}  // namespace

double wrapped_log_density(const WrappedMixture& p, double theta) {
  const std::size_t n = p.weights.size();
  std::vector<double> terms(n);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    terms[i] = std::log(p.weights[i]) + component(p.means[i], p.scales[i], p.truncation, theta).log_density;
    m = std::max(m, terms[i]);
  }
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

double wrapped_density(const WrappedMixture& p, double theta) {
  return std::exp(wrapped_log_density(p, theta));
}

double wrapped_score(const WrappedMixture& p, double theta) {
  const std::size_t n = p.weights.size();
  std::vector<ComponentEval> ev(n);
  std::vector<double> logw(n);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    ev[i] = component(p.means[i], p.scales[i], p.truncation, theta);
    logw[i] = std::log(p.weights[i]) + ev[i].log_density;
    m = std::max(m, logw[i]);
  }
  double total = 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = std::exp(logw[i] - m);
    total += r;
    acc += r * ev[i].dlog;
  }
  return acc / total;
}

WrappedMixture so2_marginal(const WrappedMixture& p_x, double sigma_w) {
  if (!(sigma_w > 0.0)) throw std::invalid_argument("so2_marginal: sigma_w must be positive");
  WrappedMixture out = p_x;
  for (double& s : out.scales) s = std::sqrt(s * s + sigma_w * sigma_w);
  return out;
}

double so2_tsm_target(const WrappedMixture& p_x, double theta_x, double /*theta_y*/) {
  return wrapped_score(p_x, wrap_angle(theta_x));
}

std::vector<double> so2_posterior_sample(const WrappedMixture& p_x, double sigma_w, double theta_y,
                                         Rng& rng, std::size_t n) {
  p_x.validate();
  if (!(sigma_w > 0.0)) throw std::invalid_argument("so2_posterior_sample: sigma_w must be positive");
  const WrappedMixture noise = WrappedMixture::single(0.0, sigma_w, p_x.truncation);
  auto log_post = [&](double th) {
    return wrapped_log_density(p_x, th) + wrapped_log_density(noise, theta_y - th);
  };
  // Envelope: per-cell maxima of a fine grid, padded for the curvature
  // between nodes. The cell bound doubles as a squeeze, so most rejections
  // never evaluate the posterior.
  constexpr int kGrid = 8192;
  std::vector<double> node(kGrid + 1);
  for (int k = 0; k < kGrid; ++k) node[k] = log_post(kTwoPi * k / kGrid);
  node[kGrid] = node[0];
  std::vector<double> cell(kGrid);
  double bound = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < kGrid; ++k) {
    cell[k] = std::max(node[k], node[k + 1]) + 0.05;
    bound = std::max(bound, cell[k]);
  }
  std::vector<double> out;
  out.reserve(n);
  while (out.size() < n) {
    const double th = rng.uniform(0.0, kTwoPi);
    const double log_u = std::log(rng.uniform()) + bound;
    const int k = std::min(kGrid - 1, static_cast<int>(th / kTwoPi * kGrid));
    if (log_u >= cell[k]) continue;
    if (log_u < log_post(th)) out.push_back(th);
  }
  return out;
}

// ---- bridge ----------------------------------------------------------------

void BridgeSpec::validate() const {
  std::ostringstream err;
  if (!(alpha > 0.0 && alpha < 1.0)) err << "alpha must lie in (0, 1); ";
  if (!(s0 > 0.0) || !(s1 > 0.0) || !(sigma_w > 0.0)) err << "scales must be positive; ";
  if (!std::isfinite(m0) || !std::isfinite(m1)) err << "means must be finite; ";
  if (!err.str().empty()) throw std::invalid_argument("BridgeSpec: " + err.str());
}

BivariateGaussian bridge_posterior(const BridgeSpec& b, double y) {
  b.validate();
  const Eigen::Vector2d c(b.alpha * b.s0 * b.s0, (1.0 - b.alpha) * b.s1 * b.s1);
  const double v = b.marginal_variance();
  BivariateGaussian out;
  out.mean = Eigen::Vector2d(b.m0, b.m1) + c * ((y - b.marginal_mean()) / v);
  Eigen::Matrix2d prior = Eigen::Matrix2d::Zero();
  prior(0, 0) = b.s0 * b.s0;
  prior(1, 1) = b.s1 * b.s1;
  out.cov = prior - c * c.transpose() / v;
  return out;
}

double bridge_marginal_score(const BridgeSpec& b, double y) {
  b.validate();
  return -(y - b.marginal_mean()) / b.marginal_variance();
}

namespace {

struct Running {
  double sum = 0.0;
  double sum_sq = 0.0;
  void add(double x) { sum += x; sum_sq += x * x; }
};

}  // namespace

BridgeEstimates bridge_score_estimates(const BridgeSpec& b, double y, std::size_t n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("bridge_score_estimates: n must be at least 2");
  const BivariateGaussian post = bridge_posterior(b, y);
  const Eigen::Matrix2d l = post.cov.llt().matrixL();
  // Shift by the posterior means so the running sums stay well conditioned.
  const double c0 = -(post.mean[0] - b.m0) / (b.s0 * b.s0);
  const double c1 = -(post.mean[1] - b.m1) / (b.s1 * b.s1);
  Running r0, r1, rs;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d z(rng.normal(), rng.normal());
    const Eigen::Vector2d x = post.mean + l * z;
    const double g0 = -(x[0] - b.m0) / (b.s0 * b.s0);
    const double g1 = -(x[1] - b.m1) / (b.s1 * b.s1);
    r0.add(g0 / b.alpha - c0 / b.alpha);
    r1.add(g1 / (1.0 - b.alpha) - c1 / (1.0 - b.alpha));
    rs.add(g0 + g1 - c0 - c1);
  }
  const double nn = static_cast<double>(n);
  auto finish = [&](const Running& r, double shift, double& mean, double& var, double& se) {
    const double m = r.sum / nn;
    var = std::max(0.0, (r.sum_sq - nn * m * m) / (nn - 1.0));
    se = std::sqrt(var / nn);
    mean = m + shift;
  };
  BridgeEstimates e{};
  finish(r0, c0 / b.alpha, e.via_x0, e.var_x0, e.se_x0);
  finish(r1, c1 / (1.0 - b.alpha), e.via_x1, e.var_x1, e.se_x1);
  finish(rs, c0 + c1, e.symmetric, e.var_symmetric, e.se_symmetric);
  e.analytic = bridge_marginal_score(b, y);
  return e;
}

double bridge_tsm_loss(const std::function<double(double)>& s, const BridgeSpec& b, std::size_t n,
                       Rng& rng) {
  b.validate();
  if (n < 1) throw std::invalid_argument("bridge_tsm_loss: n must be at least 1");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = b.m0 + b.s0 * rng.normal();
    const double x1 = b.m1 + b.s1 * rng.normal();
    const double y = b.alpha * x0 + (1.0 - b.alpha) * x1 + b.sigma_w * rng.normal();
    const double target = -(x0 - b.m0) / (b.s0 * b.s0) - (x1 - b.m1) / (b.s1 * b.s1);
    const double r = s(y) - target;
    acc += r * r;
  }
  return acc / static_cast<double>(n);
}

}  // namespace tsm
