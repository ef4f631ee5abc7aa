#include "commands.hpp"

#include "tsm/analytic.hpp"
#include "tsm/extensions.hpp"
#include "tsm/oracle.hpp"
#include "tsm/sampler.hpp"
#include "tsm/targets.hpp"
#include "tsm/verify.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <numbers>
#include <regex>
#include <sstream>

#ifndef TSM_VERSION
#define TSM_VERSION "0.0.0"
#endif

namespace tsm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Shortest round-trip decimal; identical input gives identical bytes.
std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0) v = 0;  // no "-0"
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string num(std::size_t v) { return std::to_string(v); }

class Csv {
 public:
  Csv(const fs::path& path, const std::vector<std::string>& header) : os_(path, std::ios::binary) {
    if (!os_) throw std::runtime_error("cannot write " + path.string());
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os_ << ',';
      os_ << cells[i];
    }
    os_ << '\n';
  }
  ~Csv() { os_.flush(); }

 private:
  std::ofstream os_;
};

// Collects output names for the manifest.
struct Outputs {
  fs::path dir;
  std::vector<std::string> files;
  fs::path add(const std::string& name) {
    files.push_back(name);
    return dir / name;
  }
};

std::string safe_label(std::string s) {
  for (char& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) c = '_';
  }
  return s;
}

std::vector<ScoreTargetKind> parse_kinds(const std::vector<std::string>& names) {
  std::vector<ScoreTargetKind> out;
  for (const auto& n : names) out.push_back(parse_target_kind(n));
  return out;
}

Vec v1(double x) { return Vec::Constant(1, x); }

void write_manifest(const std::string& command, const Config& cfg, const Outputs& out) {
  const json effective = to_json(cfg);
  const std::string canonical = effective.dump();
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical)));
  json m = {
      {"command", command},
      {"config_hash", std::string("fnv1a64:") + hash},
      {"seed", cfg.seed},
      {"versions",
       {{"tsm", TSM_VERSION},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"compiler", __VERSION__}}},
      {"outputs", out.files},
      {"config", effective},
  };
  std::ofstream(out.dir / (command + ".manifest.json"), std::ios::binary) << m.dump(2) << '\n';

  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  std::ofstream(out.dir / (command + ".timestamp.txt"), std::ios::binary) << stamp << '\n';
}

// ---- subcommands -------------------------------------------------------------

int variance_study_cmd(const Config& cfg, const RunOptions& opt, Outputs& out) {
  const auto& s = cfg.variance_study;
  const auto kinds = parse_kinds(s.kinds);
  Csv csv(out.add("variance_study.csv"), {"target", "t", "kind", "mean_variance"});
  for (std::size_t ti = 0; ti < s.targets.size(); ++ti) {
    VarianceStudyConfig vc;
    vc.n_outer = s.n_outer;
    vc.n_inner = s.n_inner;
    vc.t_grid = uniform_grid(s.grid_lo, s.grid_hi, s.grid_points);
    vc.seed = derive_seed(cfg.seed, {1, ti});
    vc.workers = opt.workers;
    for (const auto& r : variance_study(cfg.target(s.targets[ti]), cfg.schedule, kinds, vc)) {
      csv.row({s.targets[ti], num(r.t), r.kind, num(r.mean_variance)});
    }
  }
  return 0;
}

int weights_cmd(const Config& cfg, const RunOptions&, Outputs& out) {
  const auto& s = cfg.weights;
  const auto grid = uniform_grid(cfg.schedule.t_min, cfg.schedule.t_max, s.points);
  {
    Csv csv(out.add("weights.csv"), {"t", "weighting", "lambda", "lambda_normalized"});
    for (const auto& name : s.weightings) {
      const NormalizedWeighting w(parse_weighting(name, s.sigma_data2), cfg.schedule);
      for (double t : grid) csv.row({num(t), name, num(weighting(w.kind(), cfg.schedule, t)), num(w(t))});
    }
  }
  Csv csv(out.add("mixture_weights.csv"), {"t", "target", "kappa", "kappa_bar"});
  for (const auto& name : s.targets) {
    const auto p = cfg.target(name);
    const double v = moments(p).total_variance;
    for (double t : grid) csv.row({num(t), name, num(kappa(t, v, cfg.schedule)), num(kappa_bar(t, p, cfg.schedule))});
  }
  return 0;
}

int loss_dist_cmd(const Config& cfg, const RunOptions& opt, Outputs& out) {
  const auto& s = cfg.loss_dist;
  std::vector<NamedTarget> targets;
  for (const auto& n : s.targets) targets.push_back({n, cfg.target(n)});
  std::vector<WeightingVariant> ws;
  for (const auto& n : s.weightings) ws.push_back(parse_weighting(n).variant);
  LossDistConfig lc;
  lc.reps = s.reps;
  lc.n_per_rep = s.n_per_rep;
  lc.seed = derive_seed(cfg.seed, {2});
  lc.workers = opt.workers;
  const auto rows = loss_distribution_study(targets, parse_kinds(s.kinds), ws, cfg.schedule, lc);

  Csv csv(out.add("loss_dist.csv"), {"target", "kind", "weighting", "rep", "loss"});
  struct Acc {
    double sum = 0, sum_sq = 0;
    std::size_t n = 0;
  };
  std::vector<std::pair<std::string, Acc>> acc;  // first-seen order
  for (const auto& r : rows) {
    csv.row({r.target, r.kind, r.weighting, num(r.rep), num(r.loss_value)});
    const std::string key = r.target + "," + r.kind + "," + r.weighting;
    auto it = std::find_if(acc.begin(), acc.end(), [&](const auto& e) { return e.first == key; });
    if (it == acc.end()) it = acc.insert(acc.end(), {key, Acc{}});
    it->second.sum += r.loss_value;
    it->second.sum_sq += r.loss_value * r.loss_value;
    ++it->second.n;
  }
  Csv summary(out.add("loss_dist_summary.csv"), {"target", "kind", "weighting", "mean", "variance"});
  for (const auto& [key, a] : acc) {
    const double n = static_cast<double>(a.n), m = a.sum / n;
    summary.row({key, num(m), num(std::max(0.0, (a.sum_sq - n * m * m) / (n - 1)))});
  }
  return 0;
}

nn::ModelLayout layout_for(const TrainSection& s, std::size_t dim) {
  nn::ModelLayout l;
  l.input_dim = dim;
  l.embed_dim = s.embed_dim;
  l.hidden = s.hidden;
  l.activation = nn::parse_activation(s.activation);
  return l;
}

int train_cmd(const Config& cfg, const RunOptions&, Outputs& out) {
  const auto& s = cfg.train;
  const MixtureSpec p = cfg.target(s.target);
  const fs::path ckpt_dir = out.dir / "checkpoints";
  fs::create_directories(ckpt_dir);
  Csv total(out.add("loss_total.csv"), {"iteration", "kind", "total_loss"});
  Csv bins(out.add("loss_bins.csv"), {"iteration", "kind", "t_bin", "bin_loss"});
  for (const auto& kind_name : s.kinds) {
    nn::TrainConfig tc;
    tc.learning_rate = s.learning_rate;
    tc.batch_size = s.batch_size;
    tc.iterations = s.iterations;
    tc.kind = parse_target_kind(kind_name);
    if (s.weighting != "uniform") tc.weighting = parse_weighting(s.weighting, moments(p).total_variance);
    // Every kind shares the master seed: same initialization, same batches.
    tc.seed = cfg.seed;
    tc.t_bins = s.t_bins;
    tc.layout = layout_for(s, p.dim);
    const std::string label = safe_label(kind_name);
    auto save = [&](std::size_t it, const nn::ScoreModel& m) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_%07zu.bin", label.c_str(), it);
      nn::save_checkpoint(ckpt_dir / name, m, it);
      out.files.push_back("checkpoints/" + std::string(name));
    };
    std::cerr << "training " << kind_name << " for " << s.iterations << " iterations\n";
    const auto r = nn::train(p, cfg.schedule, tc, save, s.checkpoint_every);
    const auto& h = r.history;
    for (std::size_t it = 0; it < h.total_loss.size(); ++it) {
      total.row({num(it), kind_name, num(h.total_loss[it])});
      for (std::size_t b = 0; b < h.t_bins; ++b) bins.row({num(it), kind_name, num(b), num(h.bin(it, b))});
    }
  }
  return 0;
}

int sample_eval_cmd(const Config& cfg, const RunOptions& opt, Outputs& out) {
  const auto& s = cfg.sample_eval;
  const fs::path dir = s.checkpoint_dir.empty() ? out.dir / "checkpoints" : fs::path(s.checkpoint_dir);
  if (!fs::is_directory(dir)) throw std::runtime_error("checkpoint directory not found: " + dir.string());
  struct Entry {
    std::string kind;
    std::size_t iteration;
    fs::path path;
  };
  std::vector<Entry> entries;
  const std::regex pattern(R"((.+)_(\d+)\.bin)");
  for (const auto& f : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = f.path().filename().string();
    if (std::regex_match(name, m, pattern)) entries.push_back({m[1], std::stoul(m[2]), f.path()});
  }
  if (entries.empty()) throw std::runtime_error("no checkpoints in " + dir.string());
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.kind != b.kind ? a.kind < b.kind : a.iteration < b.iteration;
  });

  const MixtureSpec p = cfg.target(cfg.train.target);
  Rng ref_rng = Rng::substream(cfg.seed, {8});
  const Mat reference = sample(p, ref_rng, s.n_samples);
  SamplerConfig sc = SamplerConfig::for_schedule(cfg.schedule);
  sc.steps = s.steps;
  // One sampler stream for every checkpoint, so differences come from the model.
  sc.seed = derive_seed(cfg.seed, {7});
  sc.workers = opt.workers;

  Csv csv(out.add("mmd.csv"), {"kind", "iteration", "mmd2"});
  for (const auto& e : entries) {
    const nn::ScoreModel m = nn::load_checkpoint(e.path);
    if (m.layout().input_dim != p.dim) {
      throw std::runtime_error(e.path.string() + ": model dimension does not match train.target");
    }
    const Mat x = reverse_sample([&m](const Mat& y, double t) { return m.forward_batch(y, t); }, cfg.schedule, sc,
                                 s.n_samples, p.dim);
    csv.row({e.kind, num(e.iteration), num(mmd2(x, reference, s.bandwidth))});
  }
  return 0;
}

int verify_cmd(const Config& cfg, const RunOptions&, Outputs& out) {
  IdentitySuiteConfig ic;
  ic.seed = cfg.seed;
  ic.probes_per_target = cfg.verify.probes_per_target;
  ic.skip_so2_sampling = cfg.verify.skip_so2_sampling;
  const auto results = identity_suite(ic);
  Csv csv(out.add("verify.csv"), {"check", "passed", "max_error", "tolerance", "probes", "detail"});
  std::size_t passed = 0;
  for (const auto& r : results) {
    csv.row({r.name, r.passed ? "true" : "false", num(r.max_error), num(r.tolerance), num(r.probes),
             "\"" + r.detail + "\""});
    std::cout << (r.passed ? "pass  " : "FAIL  ") << r.name << "  max error " << r.max_error << " (tolerance "
              << r.tolerance << ")\n";
    if (r.passed) ++passed;
  }
  std::cout << passed << " of " << results.size() << " identity checks passed\n";
  return passed == results.size() ? 0 : 2;
}

int bridge_cmd(const Config& cfg, const RunOptions&, Outputs& out) {
  const auto& s = cfg.bridge;
  Csv csv(out.add("bridge.csv"), {"spec", "alpha", "y", "analytic", "via_x0", "se_x0", "via_x1", "se_x1", "symmetric",
                                  "se_symmetric"});
  for (std::size_t si = 0; si < s.specs.size(); ++si) {
    for (std::size_t yi = 0; yi < s.y.size(); ++yi) {
      Rng rng = Rng::substream(cfg.seed, {3, si, yi});
      const auto e = bridge_score_estimates(s.specs[si], s.y[yi], s.n, rng);
      csv.row({num(si), num(s.specs[si].alpha), num(s.y[yi]), num(e.analytic), num(e.via_x0), num(e.se_x0),
               num(e.via_x1), num(e.se_x1), num(e.symmetric), num(e.se_symmetric)});
    }
  }
  return 0;
}

int so2_cmd(const Config& cfg, const RunOptions&, Outputs& out) {
  const auto& s = cfg.so2;
  const WrappedMixture noise = WrappedMixture::single(0.0, s.noise_scale, s.truncation);
  Csv csv(out.add("so2.csv"),
          {"prior_scale", "theta_y", "marginal_score", "quadrature", "monte_carlo", "monte_carlo_se"});
  for (std::size_t pi = 0; pi < s.prior_scales.size(); ++pi) {
    const auto px = WrappedMixture::single(0.0, s.prior_scales[pi], s.truncation);
    const auto py = so2_marginal(px, s.noise_scale);
    for (std::size_t k = 0; k < s.angles; ++k) {
      const double ty = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(s.angles);
      const double fd = oracle::central_difference([&](double u) { return wrapped_log_density(py, u); }, ty);
      const double quad = oracle::circle_posterior_expectation(
          [&](double th) { return so2_tsm_target(px, th, ty); }, [&](double th) { return wrapped_log_density(px, th); },
          [&](double th) { return wrapped_log_density(noise, ty - th); });
      Rng rng = Rng::substream(cfg.seed, {4, pi, k});
      double sum = 0, sum_sq = 0;
      for (double th : so2_posterior_sample(px, s.noise_scale, ty, rng, s.n)) {
        const double v = so2_tsm_target(px, th, ty);
        sum += v;
        sum_sq += v * v;
      }
      const double n = static_cast<double>(s.n), m = sum / n;
      const double se = std::sqrt(std::max(0.0, (sum_sq - n * m * m) / (n - 1)) / n);
      csv.row({num(s.prior_scales[pi]), num(ty), num(fd), num(quad), num(m), num(se)});
    }
  }
  return 0;
}

int general_noise_cmd(const Config& cfg, const RunOptions&, Outputs& out) {
  const auto& s = cfg.general_noise;
  Csv csv(out.add("general_noise.csv"), {"target", "noise_scale", "y", "oracle_score", "tsi_estimate", "abs_error"});
  for (const auto& name : s.targets) {
    const auto p = cfg.target(name);
    auto px = [&](double x) { return std::exp(log_density(p, v1(x))); };
    const auto w = oracle::mixture_window(p);
    for (double sw : s.noise_scales) {
      const auto m = cubic_noise_model(sw);
      auto lik = [&](double y, double x) { return std::exp(m.log_likelihood(v1(y), v1(x))); };
      for (double y : s.y) {
        const double ref = oracle::quad_marginal_score(px, lik, y, w);
        const double est = oracle::quad_posterior_expectation(
            [&](double x) { return general_tsi_target(m, p, v1(x), v1(y))[0]; }, px, lik, y, w);
        csv.row({name, num(sw), num(y), num(ref), num(est), num(std::abs(est - ref))});
      }
    }
  }
  return 0;
}

using Handler = int (*)(const Config&, const RunOptions&, Outputs&);

const std::vector<std::pair<std::string, Handler>>& handlers() {
  static const std::vector<std::pair<std::string, Handler>> h = {
      {"variance-study", variance_study_cmd}, {"weights", weights_cmd}, {"loss-dist", loss_dist_cmd},
      {"train", train_cmd},                   {"sample-eval", sample_eval_cmd}, {"verify", verify_cmd},
      {"bridge", bridge_cmd},                 {"so2", so2_cmd},          {"general-noise", general_noise_cmd},
  };
  return h;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& h : handlers()) n.push_back(h.first);
    return n;
  }();
  return names;
}

int run_command(const std::string& name, const Config& cfg, const RunOptions& opt) {
  const auto it = std::find_if(handlers().begin(), handlers().end(), [&](const auto& h) { return h.first == name; });
  if (it == handlers().end()) throw std::invalid_argument("unknown subcommand: " + name);
  fs::create_directories(opt.out_dir);
  Outputs out{opt.out_dir, {}};
  const int status = it->second(cfg, opt, out);
  write_manifest(name, cfg, out);
  return status;
}

}  // namespace tsm::cli
