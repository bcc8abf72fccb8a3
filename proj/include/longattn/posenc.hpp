#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "longattn/tensor.hpp"

namespace longattn {

enum class PosScheme { None, Sinusoidal, LearnedAbsolute, RoPE, T5Relative };

std::string to_string(PosScheme scheme);
PosScheme parse_pos_scheme(const std::string& name);

struct PosEncConfig {
  PosScheme scheme = PosScheme::Sinusoidal;
  /// Base of the geometric frequency ladder (sinusoidal and RoPE).
  double sinusoidal_factor = 10000.0;
  int t5_num_buckets = 32;
  int t5_max_distance = 128;
  /// Rows of each learned table; 0 means "use the model's max lengths".
  std::size_t learned_max_len = 0;

  void validate() const;
  bool operator==(const PosEncConfig&) const = default;
};

/// PE[p, 2i] = sin(p / factor^(2i/d)), PE[p, 2i+1] = cos(p / factor^(2i/d)).
Tensor sinusoidal(std::size_t length, std::size_t dim, double factor = 10000.0);

/// First `length` rows of a learned table (differentiable).
Tensor learned_absolute(const Tensor& table, std::size_t length);

/// Tiles `table` end to end up to `new_len` rows, truncating the last copy.
Tensor replicate(const Tensor& table, std::size_t new_len);

/// Rotates each (2i, 2i+1) channel pair of row r of every head by
/// positions[r] * factor^(-2i/d). x is [h, L, d].
Tensor rope_apply(const Tensor& x, std::span<const std::int64_t> positions, double factor = 10000.0);

/// T5 bucketing of the relative distance key_pos - query_pos: half the
/// buckets are exact offsets, the rest logarithmically spaced up to
/// max_distance. Bidirectional splits the range by sign first.
int t5_bucket(std::int64_t relative, int num_buckets, int max_distance, bool bidirectional);

/// Dense [h, Lq, Lk] bias gathered from `table` [h, num_buckets].
Tensor t5_relative_bias(std::size_t query_len, std::size_t key_len, int num_buckets, int max_distance,
                        const Tensor& table, bool bidirectional);

/// Identity; present so every scheme has an application function.
inline Tensor none_encoding(const Tensor& x) { return x; }

}  // namespace longattn
