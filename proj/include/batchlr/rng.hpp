#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace batchlr {

/// One SplitMix64 step; advances `state`.
std::uint64_t splitmix64(std::uint64_t& state);

/// Seed of run `index` under `master`. Independent of how runs are scheduled.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// mt19937_64 with portable derived draws. The std distributions are
/// implementation-defined, so uniform and normal variates are produced here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [0, n), unbiased (rejection sampling). n must be >= 1.
  std::size_t uniform_index(std::size_t n);
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller; caches the second variate.
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace batchlr
