#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace tsm {

/// splitmix64 finalizer; used to derive statistically independent substream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Deterministic seed for the substream addressed by `path` under `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

/// Seeded random stream. Not thread-safe; give each task its own substream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  static Rng substream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    return Rng(derive_seed(seed, path));
  }

  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  double normal() { return normal_(engine_); }

  /// Index drawn with probability proportional to `weights` (which need not be normalized).
  std::size_t categorical(std::span<const double> weights);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace tsm
