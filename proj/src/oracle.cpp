#include "tsm/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace tsm::oracle {

namespace {

GaussLegendre build_rule(std::size_t n) {
  GaussLegendre r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    // Chebyshev-like initial guess, then Newton on P_n.
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes[i] = -x;
    r.nodes[n - 1 - i] = x;
    r.weights[i] = w;
    r.weights[n - 1 - i] = w;
  }
  return r;
}

// Panels of this many nodes make up the composite rule.
constexpr std::size_t kPanelNodes = 32;

struct Grid {
  std::vector<double> x;
  std::vector<double> w;
};

Grid composite_grid(Window win, std::size_t nodes) {
  if (!(win.hi > win.lo)) throw std::invalid_argument("quadrature window must have hi > lo");
  if (nodes < 1) throw std::invalid_argument("quadrature needs at least one node");
  const std::size_t per = std::min(nodes, kPanelNodes);
  const std::size_t panels = (nodes + per - 1) / per;
  const GaussLegendre& rule = GaussLegendre::get(per);
  const double width = (win.hi - win.lo) / static_cast<double>(panels);
  Grid g;
  g.x.reserve(panels * per);
  g.w.reserve(panels * per);
  for (std::size_t p = 0; p < panels; ++p) {
    const double a = win.lo + width * static_cast<double>(p);
    for (std::size_t k = 0; k < per; ++k) {
      g.x.push_back(a + 0.5 * width * (rule.nodes[k] + 1.0));
      g.w.push_back(0.5 * width * rule.weights[k]);
    }
  }
  return g;
}

void check_window(const std::vector<double>& f, const char* what) {
  double peak = 0.0;
  for (double v : f) peak = std::max(peak, std::abs(v));
  if (!(peak > 0.0)) throw QuadratureWindowError(std::string(what) + ": integrand vanishes on the window");
  if (std::abs(f.front()) > 1e-12 * peak || std::abs(f.back()) > 1e-12 * peak) {
    throw QuadratureWindowError(std::string(what) + ": window truncates non-negligible mass");
  }
}

}  // namespace

const GaussLegendre& GaussLegendre::get(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, GaussLegendre> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build_rule(n)).first;
  return it->second;
}

double integrate(const Density& f, Window w, std::size_t nodes) {
  const Grid g = composite_grid(w, nodes);
  double acc = 0.0;
  for (std::size_t i = 0; i < g.x.size(); ++i) acc += g.w[i] * f(g.x[i]);
  return acc;
}

double quad_marginal_density(const Density& p_x, const Conditional& noise, double y, Window w,
                             std::size_t nodes) {
  const Grid g = composite_grid(w, nodes);
  std::vector<double> f(g.x.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < g.x.size(); ++i) {
    f[i] = p_x(g.x[i]) * noise(y, g.x[i]);
    acc += g.w[i] * f[i];
  }
  check_window(f, "quad_marginal_density");
  return acc;
}

double quad_marginal_score(const Density& p_x, const Conditional& noise, double y, Window w,
                           std::size_t nodes) {
  constexpr double h = 1e-5;
  const double up = quad_marginal_density(p_x, noise, y + h, w, nodes);
  const double down = quad_marginal_density(p_x, noise, y - h, w, nodes);
  return (std::log(up) - std::log(down)) / (2.0 * h);
}

double quad_posterior_expectation(const Density& integrand, const Density& p_x,
                                  const Conditional& noise, double y, Window w, std::size_t nodes) {
  const Grid g = composite_grid(w, nodes);
  std::vector<double> f(g.x.size());
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < g.x.size(); ++i) {
    f[i] = p_x(g.x[i]) * noise(y, g.x[i]);
    den += g.w[i] * f[i];
    if (f[i] != 0.0) num += g.w[i] * f[i] * integrand(g.x[i]);
  }
  check_window(f, "quad_posterior_expectation");
  return num / den;
}

Window mixture_window(const MixtureSpec& p, double pad) {
  if (p.dim != 1) throw std::invalid_argument("mixture_window: quadrature is 1-d only");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < p.size(); ++i) {
    lo = std::min(lo, p.means[i][0] - pad * p.scales[i]);
    hi = std::max(hi, p.means[i][0] + pad * p.scales[i]);
  }
  return {lo, hi};
}

Window additive_window(const MixtureSpec& p, double alpha, double noise_sd, double y, double pad) {
  const Window prior = mixture_window(p, pad);
  const double c = y / alpha;
  const double r = pad * noise_sd / alpha;
  const Window w{std::max(prior.lo, c - r), std::min(prior.hi, c + r)};
  return w.hi > w.lo ? w : prior;
}

double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

double circle_posterior_expectation(const std::function<double(double)>& f,
                                    const std::function<double(double)>& log_prior,
                                    const std::function<double(double)>& log_lik, std::size_t nodes) {
  if (nodes < 2) throw std::invalid_argument("circle quadrature needs at least two nodes");
  std::vector<double> lw(nodes);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < nodes; ++k) {
    const double th = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(nodes);
    lw[k] = log_prior(th) + log_lik(th);
    m = std::max(m, lw[k]);
  }
  if (!std::isfinite(m)) throw QuadratureWindowError("circle posterior has no mass");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < nodes; ++k) {
    const double w = std::exp(lw[k] - m);
    if (w == 0.0) continue;
    const double th = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(nodes);
    num += w * f(th);
    den += w;
  }
  return num / den;
}

}  // namespace tsm::oracle
