#include "config.hpp"

#include "tsm/dist.hpp"
#include "tsm/targets.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace tsm::cli {

using nlohmann::json;

namespace {

std::string joined(const std::vector<std::string>& problems) {
  std::string s = "invalid config:";
  for (const auto& p : problems) s += "\n  " + p;
  return s;
}

// Walks a JSON object, collecting type errors and unknown keys under a dotted path.
class Reader {
 public:
  Reader(std::vector<std::string>& errors, const json& obj, std::string path)
      : errors_(errors), obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) errors_.push_back(where() + " must be an object");
  }

  ~Reader() {
    if (!obj_.is_object()) return;
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.count(k)) errors_.push_back(field(k) + " is not a recognized setting");
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.is_object() && obj_.contains(key) && !obj_.at(key).is_null();
  }

  const json& raw(const std::string& key) { return obj_.at(key); }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (v.is_number()) out = v.get<double>();
    else errors_.push_back(field(key) + " must be a number");
  }

  void optional_number(const std::string& key, std::optional<double>& out) {
    if (!has(key)) return;
    double v = 0;
    number(key, v);
    out = v;
  }

  void count(const std::string& key, std::size_t& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (v.is_number_unsigned()) out = v.get<std::size_t>();
    else if (v.is_number_integer()) errors_.push_back(field(key) + " must not be negative");
    else errors_.push_back(field(key) + " must be a non-negative integer");
  }

  void integer(const std::string& key, int& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (v.is_number_integer()) out = v.get<int>();
    else errors_.push_back(field(key) + " must be an integer");
  }

  void seed(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (v.is_number_unsigned()) out = v.get<std::uint64_t>();
    else errors_.push_back(field(key) + " must be a non-negative integer");
  }

  void flag(const std::string& key, bool& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (v.is_boolean()) out = v.get<bool>();
    else errors_.push_back(field(key) + " must be true or false");
  }

  void text(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (v.is_string()) out = v.get<std::string>();
    else errors_.push_back(field(key) + " must be a string");
  }

  void texts(const std::string& key, std::vector<std::string>& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_array()) {
      errors_.push_back(field(key) + " must be a list of strings");
      return;
    }
    std::vector<std::string> r;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i].is_string()) r.push_back(v[i].get<std::string>());
      else errors_.push_back(field(key) + "[" + std::to_string(i) + "] must be a string");
    }
    out = r;
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_array()) {
      errors_.push_back(field(key) + " must be a list of numbers");
      return;
    }
    std::vector<double> r;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i].is_number()) r.push_back(v[i].get<double>());
      else errors_.push_back(field(key) + "[" + std::to_string(i) + "] must be a number");
    }
    out = r;
  }

  void counts(const std::string& key, std::vector<std::size_t>& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_array()) {
      errors_.push_back(field(key) + " must be a list of positive integers");
      return;
    }
    std::vector<std::size_t> r;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i].is_number_unsigned()) r.push_back(v[i].get<std::size_t>());
      else errors_.push_back(field(key) + "[" + std::to_string(i) + "] must be a positive integer");
    }
    out = r;
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  std::vector<std::string>& errors_;
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

// Reads a mixture: weights, scales, and means as numbers (1-d) or lists (d-dim).
MixtureSpec read_mixture(std::vector<std::string>& errors, const json& j, const std::string& path) {
  MixtureSpec m;
  Reader r(errors, j, path);
  r.numbers("weights", m.weights);
  r.numbers("scales", m.scales);
  if (!r.has("weights")) errors.push_back(r.field("weights") + " is required");
  if (!r.has("scales")) errors.push_back(r.field("scales") + " is required");
  if (!r.has("means")) {
    errors.push_back(r.field("means") + " is required");
    return m;
  }
  const json& means = r.raw("means");
  if (!means.is_array()) {
    errors.push_back(r.field("means") + " must be a list");
    return m;
  }
  m.dim = 0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    const std::string at = r.field("means") + "[" + std::to_string(i) + "]";
    Vec mu;
    if (means[i].is_number()) {
      mu = Vec::Constant(1, means[i].get<double>());
    } else if (means[i].is_array() && !means[i].empty()) {
      mu.resize(static_cast<Eigen::Index>(means[i].size()));
      for (std::size_t c = 0; c < means[i].size(); ++c) {
        if (means[i][c].is_number()) mu[static_cast<Eigen::Index>(c)] = means[i][c].get<double>();
        else errors.push_back(at + " must hold numbers");
      }
    } else {
      errors.push_back(at + " must be a number or a list of numbers");
      continue;
    }
    if (m.dim == 0) m.dim = static_cast<std::size_t>(mu.size());
    else if (m.dim != static_cast<std::size_t>(mu.size())) errors.push_back(at + " has a different dimension");
    m.means.push_back(mu);
  }
  if (m.dim == 0) m.dim = 1;
  for (std::size_t i = 0; i < m.scales.size(); ++i) {
    if (!(m.scales[i] > 0.0)) errors.push_back(r.field("scales") + "[" + std::to_string(i) + "] must be positive");
  }
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    if (!(m.weights[i] > 0.0)) errors.push_back(r.field("weights") + "[" + std::to_string(i) + "] must be positive");
  }
  if (m.means.size() != m.weights.size() || m.scales.size() != m.weights.size()) {
    errors.push_back(path + ": weights, means and scales must have the same length");
  } else {
    double total = 0;
    for (double w : m.weights) total += w;
    if (!m.weights.empty() && std::abs(total - 1.0) > 1e-12) errors.push_back(r.field("weights") + " must sum to 1");
  }
  return m;
}

BridgeSpec read_bridge(std::vector<std::string>& errors, const json& j, const std::string& path) {
  BridgeSpec b;
  Reader r(errors, j, path);
  r.number("m0", b.m0);
  r.number("s0", b.s0);
  r.number("m1", b.m1);
  r.number("s1", b.s1);
  r.number("sigma_w", b.sigma_w);
  r.number("alpha", b.alpha);
  if (!(b.alpha > 0.0 && b.alpha < 1.0)) errors.push_back(r.field("alpha") + " must lie in (0, 1)");
  if (!(b.s0 > 0.0)) errors.push_back(r.field("s0") + " must be positive");
  if (!(b.s1 > 0.0)) errors.push_back(r.field("s1") + " must be positive");
  if (!(b.sigma_w > 0.0)) errors.push_back(r.field("sigma_w") + " must be positive");
  return b;
}

bool is_builtin_target(const std::string& name) {
  if (name == "two_mode_planar") return true;
  try {
    parse_benchmark(name);
    return true;
  } catch (const std::invalid_argument&) {
    return false;
  }
}

template <typename Parse>
void check_names(std::vector<std::string>& errors, const std::vector<std::string>& names, const std::string& path,
                 Parse parse) {
  if (names.empty()) errors.push_back(path + " must not be empty");
  for (std::size_t i = 0; i < names.size(); ++i) {
    try {
      parse(names[i]);
    } catch (const std::exception&) {
      errors.push_back(path + "[" + std::to_string(i) + "] names an unknown entry '" + names[i] + "'");
    }
  }
}

void positive(std::vector<std::string>& errors, double v, const std::string& path) {
  if (!(v > 0.0)) errors.push_back(path + " must be positive");
}

void at_least(std::vector<std::string>& errors, std::size_t v, std::size_t lo, const std::string& path) {
  if (v < lo) errors.push_back(path + " must be at least " + std::to_string(lo));
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(joined(problems)), problems_(std::move(problems)) {}

MixtureSpec Config::target(const std::string& name) const {
  if (auto it = mixtures.find(name); it != mixtures.end()) return it->second;
  if (name == "two_mode_planar") return two_mode_planar_target();
  return benchmark_target(parse_benchmark(name));
}

Config parse_config(const json& j) {
  Config c;
  std::vector<std::string> errors;
  {
    Reader top(errors, j, "");
    top.seed("seed", c.seed);
    if (top.has("schedule")) {
      Reader r(errors, top.raw("schedule"), "schedule");
      r.number("t_min", c.schedule.t_min);
      r.number("t_max", c.schedule.t_max);
      if (!(c.schedule.t_min > 0.0 && c.schedule.t_min < c.schedule.t_max && c.schedule.t_max < 1.0)) {
        errors.push_back("schedule.t_min and schedule.t_max must satisfy 0 < t_min < t_max < 1");
      }
    }
    if (top.has("mixtures")) {
      const json& m = top.raw("mixtures");
      if (!m.is_object()) {
        errors.push_back("mixtures must be an object of named mixtures");
      } else {
        for (const auto& [name, spec] : m.items()) {
          if (is_builtin_target(name)) errors.push_back("mixtures." + name + " shadows a built-in target");
          c.mixtures[name] = read_mixture(errors, spec, "mixtures." + name);
        }
      }
    }
    auto target_ok = [&](const std::string& n) {
      if (!c.mixtures.count(n) && !is_builtin_target(n)) throw std::invalid_argument(n);
    };

    if (top.has("variance_study")) {
      auto& s = c.variance_study;
      Reader r(errors, top.raw("variance_study"), "variance_study");
      r.texts("targets", s.targets);
      r.texts("kinds", s.kinds);
      r.count("n_outer", s.n_outer);
      r.count("n_inner", s.n_inner);
      r.count("grid_points", s.grid_points);
      r.number("grid_lo", s.grid_lo);
      r.number("grid_hi", s.grid_hi);
    }
    check_names(errors, c.variance_study.targets, "variance_study.targets", target_ok);
    check_names(errors, c.variance_study.kinds, "variance_study.kinds", parse_target_kind);
    at_least(errors, c.variance_study.n_outer, 1, "variance_study.n_outer");
    at_least(errors, c.variance_study.n_inner, 2, "variance_study.n_inner");
    at_least(errors, c.variance_study.grid_points, 2, "variance_study.grid_points");
    if (!(c.variance_study.grid_lo >= c.schedule.t_min && c.variance_study.grid_lo < c.variance_study.grid_hi &&
          c.variance_study.grid_hi <= c.schedule.t_max)) {
      errors.push_back("variance_study.grid_lo and grid_hi must satisfy t_min <= grid_lo < grid_hi <= t_max");
    }

    if (top.has("weights")) {
      auto& s = c.weights;
      Reader r(errors, top.raw("weights"), "weights");
      r.texts("weightings", s.weightings);
      r.texts("targets", s.targets);
      r.number("sigma_data2", s.sigma_data2);
      r.count("points", s.points);
    }
    check_names(errors, c.weights.weightings, "weights.weightings", [](const std::string& n) { parse_weighting(n); });
    check_names(errors, c.weights.targets, "weights.targets", target_ok);
    positive(errors, c.weights.sigma_data2, "weights.sigma_data2");
    at_least(errors, c.weights.points, 2, "weights.points");

    if (top.has("loss_dist")) {
      auto& s = c.loss_dist;
      Reader r(errors, top.raw("loss_dist"), "loss_dist");
      r.texts("targets", s.targets);
      r.texts("kinds", s.kinds);
      r.texts("weightings", s.weightings);
      r.count("reps", s.reps);
      r.count("n_per_rep", s.n_per_rep);
    }
    check_names(errors, c.loss_dist.targets, "loss_dist.targets", target_ok);
    check_names(errors, c.loss_dist.kinds, "loss_dist.kinds", parse_target_kind);
    check_names(errors, c.loss_dist.weightings, "loss_dist.weightings", [](const std::string& n) { parse_weighting(n); });
    at_least(errors, c.loss_dist.reps, 2, "loss_dist.reps");
    at_least(errors, c.loss_dist.n_per_rep, 1, "loss_dist.n_per_rep");

    if (top.has("train")) {
      auto& s = c.train;
      Reader r(errors, top.raw("train"), "train");
      r.text("target", s.target);
      r.texts("kinds", s.kinds);
      r.text("weighting", s.weighting);
      r.count("iterations", s.iterations);
      r.count("batch_size", s.batch_size);
      r.number("learning_rate", s.learning_rate);
      r.count("embed_dim", s.embed_dim);
      r.counts("hidden", s.hidden);
      r.text("activation", s.activation);
      r.count("t_bins", s.t_bins);
      r.count("checkpoint_every", s.checkpoint_every);
    }
    {
      const auto& s = c.train;
      check_names(errors, {s.target}, "train.target", target_ok);
      check_names(errors, s.kinds, "train.kinds", parse_target_kind);
      check_names(errors, {s.weighting}, "train.weighting", [](const std::string& n) { parse_weighting(n); });
      check_names(errors, {s.activation}, "train.activation", nn::parse_activation);
      at_least(errors, s.iterations, 1, "train.iterations");
      at_least(errors, s.batch_size, 1, "train.batch_size");
      positive(errors, s.learning_rate, "train.learning_rate");
      if (s.embed_dim == 0 || s.embed_dim % 2) errors.push_back("train.embed_dim must be a positive even number");
      if (s.hidden.empty()) errors.push_back("train.hidden must list at least one layer width");
      for (std::size_t i = 0; i < s.hidden.size(); ++i) {
        if (s.hidden[i] == 0) errors.push_back("train.hidden[" + std::to_string(i) + "] must be positive");
      }
      at_least(errors, s.t_bins, 1, "train.t_bins");
    }

    if (top.has("sample_eval")) {
      auto& s = c.sample_eval;
      Reader r(errors, top.raw("sample_eval"), "sample_eval");
      r.text("checkpoint_dir", s.checkpoint_dir);
      r.count("n_samples", s.n_samples);
      r.count("steps", s.steps);
      r.optional_number("bandwidth", s.bandwidth);
    }
    at_least(errors, c.sample_eval.n_samples, 2, "sample_eval.n_samples");
    at_least(errors, c.sample_eval.steps, 2, "sample_eval.steps");
    if (c.sample_eval.bandwidth) positive(errors, *c.sample_eval.bandwidth, "sample_eval.bandwidth");

    if (top.has("bridge")) {
      auto& s = c.bridge;
      Reader r(errors, top.raw("bridge"), "bridge");
      if (r.has("specs")) {
        const json& specs = r.raw("specs");
        if (!specs.is_array() || specs.empty()) {
          errors.push_back("bridge.specs must be a non-empty list");
        } else {
          s.specs.clear();
          for (std::size_t i = 0; i < specs.size(); ++i) {
            s.specs.push_back(read_bridge(errors, specs[i], "bridge.specs[" + std::to_string(i) + "]"));
          }
        }
      }
      r.numbers("y", s.y);
      r.count("n", s.n);
    }
    at_least(errors, c.bridge.n, 2, "bridge.n");
    if (c.bridge.y.empty()) errors.push_back("bridge.y must not be empty");

    if (top.has("so2")) {
      auto& s = c.so2;
      Reader r(errors, top.raw("so2"), "so2");
      r.numbers("prior_scales", s.prior_scales);
      r.number("noise_scale", s.noise_scale);
      r.count("angles", s.angles);
      r.count("n", s.n);
      r.integer("truncation", s.truncation);
    }
    if (c.so2.prior_scales.empty()) errors.push_back("so2.prior_scales must not be empty");
    for (std::size_t i = 0; i < c.so2.prior_scales.size(); ++i) {
      positive(errors, c.so2.prior_scales[i], "so2.prior_scales[" + std::to_string(i) + "]");
    }
    positive(errors, c.so2.noise_scale, "so2.noise_scale");
    at_least(errors, c.so2.angles, 1, "so2.angles");
    at_least(errors, c.so2.n, 2, "so2.n");
    if (c.so2.truncation < 1) errors.push_back("so2.truncation must be at least 1");

    if (top.has("general_noise")) {
      auto& s = c.general_noise;
      Reader r(errors, top.raw("general_noise"), "general_noise");
      r.texts("targets", s.targets);
      r.numbers("noise_scales", s.noise_scales);
      r.numbers("y", s.y);
    }
    check_names(errors, c.general_noise.targets, "general_noise.targets", target_ok);
    for (const auto& name : c.general_noise.targets) {
      if (c.mixtures.count(name) && c.mixtures.at(name).dim != 1) {
        errors.push_back("general_noise.targets: '" + name + "' must be one-dimensional");
      }
    }
    if (c.general_noise.noise_scales.empty()) errors.push_back("general_noise.noise_scales must not be empty");
    for (std::size_t i = 0; i < c.general_noise.noise_scales.size(); ++i) {
      positive(errors, c.general_noise.noise_scales[i], "general_noise.noise_scales[" + std::to_string(i) + "]");
    }
    if (c.general_noise.y.empty()) errors.push_back("general_noise.y must not be empty");

    if (top.has("verify")) {
      Reader r(errors, top.raw("verify"), "verify");
      r.count("probes_per_target", c.verify.probes_per_target);
      r.flag("skip_so2_sampling", c.verify.skip_so2_sampling);
    }
    at_least(errors, c.verify.probes_per_target, 1, "verify.probes_per_target");
  }
  if (!errors.empty()) throw ConfigError(errors);
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file '" + path + "'"});
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("config is not valid JSON: ") + e.what()});
  }
  return parse_config(j);
}

json to_json(const Config& c) {
  json mixtures = json::object();
  for (const auto& [name, m] : c.mixtures) {
    json means = json::array();
    for (const auto& mu : m.means) means.push_back(std::vector<double>(mu.data(), mu.data() + mu.size()));
    mixtures[name] = {{"weights", m.weights}, {"means", means}, {"scales", m.scales}};
  }
  json bridges = json::array();
  for (const auto& b : c.bridge.specs) {
    bridges.push_back(
        {{"m0", b.m0}, {"s0", b.s0}, {"m1", b.m1}, {"s1", b.s1}, {"sigma_w", b.sigma_w}, {"alpha", b.alpha}});
  }
  const auto& vs = c.variance_study;
  const auto& w = c.weights;
  const auto& ld = c.loss_dist;
  const auto& tr = c.train;
  const auto& se = c.sample_eval;
  return {
      {"seed", c.seed},
      {"schedule", {{"t_min", c.schedule.t_min}, {"t_max", c.schedule.t_max}}},
      {"mixtures", mixtures},
      {"variance_study",
       {{"targets", vs.targets},
        {"kinds", vs.kinds},
        {"n_outer", vs.n_outer},
        {"n_inner", vs.n_inner},
        {"grid_points", vs.grid_points},
        {"grid_lo", vs.grid_lo},
        {"grid_hi", vs.grid_hi}}},
      {"weights",
       {{"weightings", w.weightings}, {"targets", w.targets}, {"sigma_data2", w.sigma_data2}, {"points", w.points}}},
      {"loss_dist",
       {{"targets", ld.targets},
        {"kinds", ld.kinds},
        {"weightings", ld.weightings},
        {"reps", ld.reps},
        {"n_per_rep", ld.n_per_rep}}},
      {"train",
       {{"target", tr.target},
        {"kinds", tr.kinds},
        {"weighting", tr.weighting},
        {"iterations", tr.iterations},
        {"batch_size", tr.batch_size},
        {"learning_rate", tr.learning_rate},
        {"embed_dim", tr.embed_dim},
        {"hidden", tr.hidden},
        {"activation", tr.activation},
        {"t_bins", tr.t_bins},
        {"checkpoint_every", tr.checkpoint_every}}},
      {"sample_eval",
       {{"checkpoint_dir", se.checkpoint_dir},
        {"n_samples", se.n_samples},
        {"steps", se.steps},
        {"bandwidth", se.bandwidth ? json(*se.bandwidth) : json(nullptr)}}},
      {"bridge", {{"specs", bridges}, {"y", c.bridge.y}, {"n", c.bridge.n}}},
      {"so2",
       {{"prior_scales", c.so2.prior_scales},
        {"noise_scale", c.so2.noise_scale},
        {"angles", c.so2.angles},
        {"n", c.so2.n},
        {"truncation", c.so2.truncation}}},
      {"general_noise",
       {{"targets", c.general_noise.targets},
        {"noise_scales", c.general_noise.noise_scales},
        {"y", c.general_noise.y}}},
      {"verify",
       {{"probes_per_target", c.verify.probes_per_target}, {"skip_so2_sampling", c.verify.skip_so2_sampling}}},
  };
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace tsm::cli
