#pragma once

#include "tsm/dist.hpp"
#include "tsm/schedule.hpp"

namespace tsm {

/// Base mixture together with its closed-form marginal at time t.
struct DiffusedMixture {
  MixtureSpec base;
  double t;
  MixtureSpec marginal;
};

/// p_t: same weights, means alpha_t mu_i, variances alpha_t^2 s_i^2 + sigma_t^2.
DiffusedMixture marginal_at(const MixtureSpec& p0, const Schedule& sched, double t);

/// p_{0|t}(. | x_t), again a Gaussian mixture.
///
/// Component means are mu_i + (alpha_t s_i^2 / s_{i,t}^2)(x_t - alpha_t mu_i) and
/// variances s_i^2 - alpha_t^2 s_i^4 / s_{i,t}^2, i.e. exact Gaussian conditioning
/// with Cov(X_0, X_t | i) = alpha_t s_i^2.
MixtureSpec posterior(const MixtureSpec& p0, const Schedule& sched, double t, const Vec& x_t);

/// grad log p_t(x_t).
Vec true_score(const MixtureSpec& p0, const Schedule& sched, double t, const Vec& x_t);

Mat posterior_sample(const MixtureSpec& p0, const Schedule& sched, double t, const Vec& x_t,
                     Rng& rng, std::size_t n);

}  // namespace tsm
