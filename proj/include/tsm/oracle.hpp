#pragma once

#include "tsm/dist.hpp"

#include <functional>
#include <vector>

namespace tsm::oracle {

/// Integration interval for the 1-d quadratures.
struct Window {
  double lo;
  double hi;
};

/// Gauss-Legendre rule on [-1, 1].
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;

  /// Cached rule with n nodes.
  static const GaussLegendre& get(std::size_t n);
};

using Density = std::function<double(double x)>;
/// p(y | x).
using Conditional = std::function<double(double y, double x)>;

inline constexpr std::size_t kDefaultNodes = 2048;

/// p_Y(y) = integral p_X(x) p(y|x) dx. Throws QuadratureWindowError when the
/// integrand at either end of the window exceeds 1e-12 of its peak.
double quad_marginal_density(const Density& p_x, const Conditional& noise, double y, Window w,
                             std::size_t nodes = kDefaultNodes);

/// Central difference (step 1e-5) of log p_Y.
double quad_marginal_score(const Density& p_x, const Conditional& noise, double y, Window w,
                           std::size_t nodes = kDefaultNodes);

/// E[integrand(X) | Y = y] under p_X(x) p(y|x).
double quad_posterior_expectation(const Density& integrand, const Density& p_x,
                                  const Conditional& noise, double y, Window w,
                                  std::size_t nodes = kDefaultNodes);

/// Plain integral of f over w.
double integrate(const Density& f, Window w, std::size_t nodes = kDefaultNodes);

/// Covers every component of a 1-d mixture out to `pad` standard deviations.
Window mixture_window(const MixtureSpec& p, double pad = 10.0);

/// Window for the additive model y = alpha x + N(0, noise_sd^2): the prior
/// window clipped to x within `pad` noise deviations of y / alpha.
Window additive_window(const MixtureSpec& p, double alpha, double noise_sd, double y, double pad = 10.0);

/// Central finite difference.
double central_difference(const std::function<double(double)>& f, double x, double h = 1e-5);

/// E[f(theta) | theta_y] on the circle for the unnormalized posterior
/// exp(log_prior(theta) + log_lik(theta)), by the periodic trapezoid rule.
double circle_posterior_expectation(const std::function<double(double)>& f,
                                    const std::function<double(double)>& log_prior,
                                    const std::function<double(double)>& log_lik,
                                    std::size_t nodes = 4096);

}  // namespace tsm::oracle
