#pragma once

#include "tsm/dist.hpp"

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace tsm {

// ---------------------------------------------------------------------------
// Non-additive noise p(y | x) = F(Phi(y, x)), Phi(y, .) a diffeomorphism.
// ---------------------------------------------------------------------------

struct GeneralNoiseModel {
  std::function<Vec(const Vec& y, const Vec& x)> phi;
  std::function<Vec(const Vec& y, const Vec& z)> phi_inv;
  /// Jacobian of phi_inv in its first argument, evaluated at (y, z).
  std::function<Mat(const Vec& y, const Vec& z)> d1_phi_inv;
  /// grad_y log |det grad_2 phi_inv(y, z)|, evaluated at (y, z).
  std::function<Vec(const Vec& y, const Vec& z)> logdet_grad;
  /// log F(z).
  std::function<double(const Vec& z)> log_f;

  double log_likelihood(const Vec& y, const Vec& x) const { return log_f(phi(y, x)); }
};

/// Phi(y, x) = y - alpha x with F = N(0, sigma^2 I) in dimension `dim`.
GeneralNoiseModel affine_noise_model(double alpha, double sigma, std::size_t dim = 1);

/// 1-d Phi(y, x) = y - g(x), g(x) = x^3 + x, F = N(0, sigma^2).
GeneralNoiseModel cubic_noise_model(double sigma);

/// Unique real root h(u) of x^3 + x = u (safeguarded Newton, bisection fallback).
double cubic_inverse(double u);

/// grad_1 Phi^{-1}(y, Phi(y,x))^T grad log p_X(x) + logdet_grad(y, Phi(y,x)).
/// Throws ModelInconsistencyError if phi_inv(y, phi(y, x)) does not return x.
Vec general_tsi_target(const GeneralNoiseModel& m, const MixtureSpec& p_x, const Vec& x, const Vec& y);

// ---------------------------------------------------------------------------
// SO(2), parameterized by angles in [0, 2 pi).
// ---------------------------------------------------------------------------

double wrap_angle(double theta);

/// Mixture of wrapped normals on the circle.
///
/// Each component is evaluated either as the angular sum over 2K+1 translates
/// (narrow components) or as its Fourier series truncated at K (wide
/// components), whichever converges faster. Truncation error is of order
/// exp(-(2 pi K)^2 / (2 s^2)) for the first form and exp(-K^2 s^2 / 2) for the second.
struct WrappedMixture {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> scales;
  int truncation = 10;

  void validate() const;
  static WrappedMixture single(double mean, double scale, int truncation = 10);
};

double wrapped_density(const WrappedMixture& p, double theta);
double wrapped_log_density(const WrappedMixture& p, double theta);
/// d/dtheta log p(theta).
double wrapped_score(const WrappedMixture& p, double theta);

/// Distribution of X +_G W with W wrapped-normal of scale sigma_w (exact for wrapped-normal mixtures).
WrappedMixture so2_marginal(const WrappedMixture& p_x, double sigma_w);

/// Tangent coordinate at y of the transported target score. On SO(2) the
/// transport d R_{x^{-1} y}(x) is the identity on the scalar coordinate, so
/// this is the derivative of log p_X at theta_x.
double so2_tsm_target(const WrappedMixture& p_x, double theta_x, double theta_y);

/// Exact draws of theta_x given theta_y by rejection from the uniform proposal.
std::vector<double> so2_posterior_sample(const WrappedMixture& p_x, double sigma_w, double theta_y,
                                         Rng& rng, std::size_t n);

// ---------------------------------------------------------------------------
// Bridge: Y = alpha X0 + (1 - alpha) X1 + W with scalar Gaussian ends.
// ---------------------------------------------------------------------------

struct BridgeSpec {
  double m0 = 0.0, s0 = 1.0;
  double m1 = 0.0, s1 = 1.0;
  double sigma_w = 1.0;
  double alpha = 0.5;

  void validate() const;
  double marginal_mean() const { return alpha * m0 + (1.0 - alpha) * m1; }
  double marginal_variance() const {
    return alpha * alpha * s0 * s0 + (1.0 - alpha) * (1.0 - alpha) * s1 * s1 + sigma_w * sigma_w;
  }
};

struct BivariateGaussian {
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov;
};

/// Law of (X0, X1) given Y = y.
BivariateGaussian bridge_posterior(const BridgeSpec& b, double y);

/// Closed-form grad log p_Y(y).
double bridge_marginal_score(const BridgeSpec& b, double y);

struct BridgeEstimates {
  double via_x0;     // mean of alpha^{-1} grad log p_X0(x0)
  double via_x1;     // mean of (1 - alpha)^{-1} grad log p_X1(x1)
  double symmetric;  // mean of grad log p_X0(x0) + grad log p_X1(x1)
  double analytic;
  double se_x0, se_x1, se_symmetric;
  double var_x0, var_x1, var_symmetric;  // sample variances of the integrands
};

BridgeEstimates bridge_score_estimates(const BridgeSpec& b, double y, std::size_t n, Rng& rng);

/// E||s(Y) - (grad log p_X0(X0) + grad log p_X1(X1))||^2 over joint draws.
double bridge_tsm_loss(const std::function<double(double)>& s, const BridgeSpec& b, std::size_t n,
                       Rng& rng);

}  // namespace tsm
