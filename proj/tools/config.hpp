#pragma once

#include "tsm/extensions.hpp"
#include "tsm/losses.hpp"
#include "tsm/nn.hpp"
#include "tsm/schedule.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsm::cli {

/// Thrown with every offending field when a config does not validate.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct VarianceStudySection {
  std::vector<std::string> targets{"unit_gaussian", "gentle_mixture", "hard_mixture_same_var", "hard_mixture_diff_var"};
  std::vector<std::string> kinds{"dsi", "tsi", "kappa", "kappa_bar"};
  std::size_t n_outer = 10000;
  std::size_t n_inner = 100;
  std::size_t grid_points = 50;
  double grid_lo = 0.01;
  double grid_hi = 0.99;
};

struct WeightsSection {
  std::vector<std::string> weightings{"song", "dsm_optimal", "tsm_optimal", "uniform"};
  std::vector<std::string> targets{"unit_gaussian", "gentle_mixture", "hard_mixture_same_var", "hard_mixture_diff_var"};
  double sigma_data2 = 1.0;
  std::size_t points = 200;
};

struct LossDistSection {
  std::vector<std::string> targets{"unit_gaussian", "gentle_mixture", "hard_mixture_same_var", "hard_mixture_diff_var"};
  std::vector<std::string> kinds{"dsi", "tsi", "kappa", "kappa_bar"};
  std::vector<std::string> weightings{"song", "dsm_optimal", "tsm_optimal", "uniform"};
  std::size_t reps = 10000;
  std::size_t n_per_rep = 100;
};

struct TrainSection {
  std::string target = "two_mode_planar";
  std::vector<std::string> kinds{"dsi", "tsi", "kappa", "kappa_bar"};
  std::string weighting = "uniform";
  std::size_t iterations = 5000;
  std::size_t batch_size = 512;
  double learning_rate = 1e-4;
  std::size_t embed_dim = 128;
  std::vector<std::size_t> hidden{128, 128, 128};
  std::string activation = "gelu";
  std::size_t t_bins = 20;
  /// Intermediate checkpoints for sample-eval; 0 keeps only the first and last.
  std::size_t checkpoint_every = 500;
};

struct SampleEvalSection {
  /// Directory holding train checkpoints; empty means the output directory.
  std::string checkpoint_dir;
  std::size_t n_samples = 2000;
  std::size_t steps = 1000;
  std::optional<double> bandwidth;
};

struct BridgeSection {
  std::vector<BridgeSpec> specs{BridgeSpec{}, BridgeSpec{0.7, 0.8, -1.2, 1.6, 0.5, 0.3}};
  std::vector<double> y{-2.0, -1.0, 0.0, 1.0, 2.0};
  std::size_t n = 1000000;
};

struct So2Section {
  std::vector<double> prior_scales{0.5, 1.0};
  double noise_scale = 0.3;
  std::size_t angles = 16;
  std::size_t n = 200000;
  int truncation = 10;
};

struct GeneralNoiseSection {
  std::vector<std::string> targets{"unit_gaussian", "gentle_mixture", "hard_mixture_same_var", "hard_mixture_diff_var"};
  std::vector<double> noise_scales{0.3, 1.0};
  std::vector<double> y{-1.0, 0.0, 1.5};
};

struct VerifySection {
  std::size_t probes_per_target = 20;
  bool skip_so2_sampling = false;
};

struct Config {
  std::uint64_t seed = 0;
  Schedule schedule;
  /// User mixtures addressable by name next to the built-in targets.
  std::map<std::string, MixtureSpec> mixtures;
  VarianceStudySection variance_study;
  WeightsSection weights;
  LossDistSection loss_dist;
  TrainSection train;
  SampleEvalSection sample_eval;
  BridgeSection bridge;
  So2Section so2;
  GeneralNoiseSection general_noise;
  VerifySection verify;

  /// Built-in benchmark name, "two_mode_planar", or a key of `mixtures`.
  MixtureSpec target(const std::string& name) const;
};

/// Reads and validates; throws ConfigError listing every problem.
Config parse_config(const nlohmann::json& j);
Config load_config(const std::string& path);

/// Canonical JSON of the effective config (used for hashing and the manifest).
nlohmann::json to_json(const Config& c);

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace tsm::cli
