#include "tsm/analytic.hpp"

namespace tsm {

DiffusedMixture marginal_at(const MixtureSpec& p0, const Schedule& sched, double t) {
  const auto [alpha, sigma] = alpha_sigma(sched, t);
  MixtureSpec m = p0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    m.means[i] = alpha * p0.means[i];
    m.scales[i] = std::sqrt(alpha * alpha * p0.scales[i] * p0.scales[i] + sigma * sigma);
  }
  return {p0, t, std::move(m)};
}

MixtureSpec posterior(const MixtureSpec& p0, const Schedule& sched, double t, const Vec& x_t) {
  require_clamped(sched, t, "posterior");
  const auto [alpha, sigma] = alpha_sigma(sched, t);
  const MixtureSpec marginal = marginal_at(p0, sched, t).marginal;

  MixtureSpec post = p0;
  post.weights = responsibilities(marginal, x_t);
  for (std::size_t i = 0; i < p0.size(); ++i) {
    const double var0 = p0.scales[i] * p0.scales[i];
    const double var_t = marginal.scales[i] * marginal.scales[i];
    const double gain = alpha * var0 / var_t;
    post.means[i] = p0.means[i] + gain * (x_t - marginal.means[i]);
    // s_i^2 - alpha^2 s_i^4 / s_{i,t}^2 == s_i^2 sigma^2 / s_{i,t}^2, which stays non-negative.
    post.scales[i] = std::sqrt(var0 * sigma * sigma / var_t);
  }
  return post;
}

Vec true_score(const MixtureSpec& p0, const Schedule& sched, double t, const Vec& x_t) {
  return score(marginal_at(p0, sched, t).marginal, x_t);
}

Mat posterior_sample(const MixtureSpec& p0, const Schedule& sched, double t, const Vec& x_t,
                     Rng& rng, std::size_t n) {
  return sample(posterior(p0, sched, t, x_t), rng, n);
}

}  // namespace tsm
