#pragma once

#include "tsm/losses.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace tsm::nn {

// Parameter storage shares one alignment so Eigen picks the same kernels on
// every run; with plain std::vector the bitwise result depended on the heap.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

enum class Activation { gelu, relu };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

/// Dense network over concat(x, time_embedding(t)) with a linear output of size input_dim.
struct ModelLayout {
  std::size_t input_dim = 2;
  std::size_t embed_dim = 128;
  std::vector<std::size_t> hidden{128, 128, 128};
  Activation activation = Activation::gelu;

  void validate() const;
  std::size_t parameter_count() const;
};

/// Sinusoidal embedding [sin(w_k t)..., cos(w_k t)...] with
/// w_k = 2 pi 10000^(-2k/embed_dim), k = 0 .. embed_dim/2 - 1.
Vec time_embedding(double t, std::size_t embed_dim);

/// Score network s_theta(x, t) with a flat parameter vector.
///
/// Parameters are stored layer by layer as [W (out x in, column-major), b].
class ScoreModel {
 public:
  explicit ScoreModel(ModelLayout layout);

  /// Uniform He-style fan-in initialization; biases start at zero.
  void initialize(Rng& rng);

  const ModelLayout& layout() const { return layout_; }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  Vec forward(const Vec& x, double t) const;
  /// Rows of x are samples; t has one entry per row.
  Mat forward_batch(const Mat& x, std::span<const double> t) const;
  Mat forward_batch(const Mat& x, double t) const;

 private:
  ModelLayout layout_;
  ParamVector params_;
};

struct LossAndGrad {
  double loss;
  ParamVector grad;
  /// Weighted squared residual of each sample (before averaging).
  std::vector<double> per_sample;
};

/// Mean over rows of weight_i ||s(x_i, t_i) - target_i||^2 and its parameter gradient.
LossAndGrad loss_and_grad(const ScoreModel& m, const Mat& x_t, std::span<const double> t,
                          const Mat& targets, std::span<const double> weights);

/// Training batch; rows are samples.
struct Batch {
  Mat x0;
  Mat x_t;
  std::vector<double> t;
};

/// Targets from `target` and time weights span * lambda~_t (1 everywhere when
/// `weight` is absent or uniform).
LossAndGrad loss_and_grad(const ScoreModel& m, const Batch& batch, const ScoreTarget& target,
                          const NormalizedWeighting* weight);

Batch draw_batch(const MixtureSpec& p0, const Schedule& sched, std::size_t size, Rng& rng);

class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grad);
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 512;
  std::size_t iterations = 5000;
  ScoreTargetKind kind = ScoreTargetKind::dsi();
  std::optional<WeightingKind> weighting;  // absent: uniform
  std::uint64_t seed = 0;
  std::size_t t_bins = 20;
  ModelLayout layout{};

  void validate() const;
};

struct TrainHistory {
  std::size_t t_bins = 0;
  std::vector<double> total_loss;  // one per iteration
  /// iterations x t_bins, row-major; NaN where a bin received no samples.
  std::vector<double> bin_loss;

  double bin(std::size_t iteration, std::size_t b) const { return bin_loss[iteration * t_bins + b]; }
  /// Mean of each bin over iterations [from, total_loss.size()), ignoring empty entries.
  std::vector<double> bin_means(std::size_t from) const;
};

struct TrainResult {
  ScoreModel model;
  TrainHistory history;
};

/// Called with the iteration count (0 = before any update) and the current model.
using TrainCallback = std::function<void(std::size_t iteration, const ScoreModel&)>;

/// Adam on the weighted regression loss. Throws DivergenceError (naming the
/// iteration and t-bin) on a non-finite loss.
TrainResult train(const MixtureSpec& p0, const Schedule& sched, const TrainConfig& cfg,
                  const TrainCallback& callback = {}, std::size_t callback_every = 0);

/// Checkpoint: "TSMCKPT\0", u32 version, layout descriptor, u64 iteration,
/// u64 parameter count, then little-endian IEEE-754 doubles.
void save_checkpoint(const std::filesystem::path& path, const ScoreModel& m, std::uint64_t iteration);
ScoreModel load_checkpoint(const std::filesystem::path& path, std::uint64_t* iteration = nullptr);

}  // namespace tsm::nn
