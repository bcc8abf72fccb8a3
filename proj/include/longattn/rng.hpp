#pragma once

#include <cstdint>
#include <random>

namespace longattn {

// Deterministic generator. The std distributions are implementation-defined,
// so every draw goes through the helpers below to keep runs reproducible
// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t bound);

  double normal();

  /// Normal resampled until |z| <= 2 standard deviations.
  double truncated_normal(double stddev);

  /// Seed for an independent child stream (e.g. per worker shard).
  std::uint64_t derive(std::uint64_t salt);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace longattn
