#pragma once

#include <cstdint>
#include <random>

namespace batchrl {

// Deterministic random stream. mt19937_64 output is pinned by the standard;
// the uniform/normal transforms below are hand-rolled so that sequences are
// identical across standard libraries (std::normal_distribution is not).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1): 53 mantissa bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal via Box-Muller; one spare value is cached.
  double normal();

  // Child stream with a decorrelated seed, for independent sub-tasks
  // (episode rollouts, evaluation) that must not disturb the parent stream.
  Rng derive(std::uint64_t stream_id) const;

  std::uint64_t seed() const { return seed_; }

  static std::uint64_t mix(std::uint64_t x);

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
  std::uint64_t seed_ = 0;
};

}  // namespace batchrl
