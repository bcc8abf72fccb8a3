#include "longattn/posenc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "longattn/ops.hpp"

namespace longattn {

std::string to_string(PosScheme scheme) {
  switch (scheme) {
    case PosScheme::None: return "none";
    case PosScheme::Sinusoidal: return "sinusoidal";
    case PosScheme::LearnedAbsolute: return "learned";
    case PosScheme::RoPE: return "rope";
    case PosScheme::T5Relative: return "t5";
  }
  return "?";
}

PosScheme parse_pos_scheme(const std::string& name) {
  for (PosScheme s : {PosScheme::None, PosScheme::Sinusoidal, PosScheme::LearnedAbsolute, PosScheme::RoPE,
                      PosScheme::T5Relative}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown position encoding '" + name + "' (none|sinusoidal|learned|rope|t5)");
}

void PosEncConfig::validate() const {
  if (!(sinusoidal_factor > 1.0)) throw ConfigError("posenc.sinusoidal_factor must be > 1");
  if (t5_num_buckets < 2) throw ConfigError("posenc.t5_num_buckets must be >= 2");
  if (t5_max_distance <= t5_num_buckets) throw ConfigError("posenc.t5_max_distance must exceed t5_num_buckets");
}

Tensor sinusoidal(std::size_t length, std::size_t dim, double factor) {
  if (dim % 2 != 0) throw DimensionError("sinusoidal encoding needs an even width, got " + std::to_string(dim));
  std::vector<double> pe(length * dim);
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double inv_freq = std::pow(factor, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    for (std::size_t p = 0; p < length; ++p) {
      const double angle = static_cast<double>(p) * inv_freq;
      pe[p * dim + 2 * i] = std::sin(angle);
      pe[p * dim + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor({length, dim}, std::move(pe));
}

Tensor learned_absolute(const Tensor& table, std::size_t length) {
  if (length > table.dim(0)) {
    throw DimensionError("sequence length " + std::to_string(length) + " exceeds learned position table of " +
                         std::to_string(table.dim(0)) + " rows; replicate the table first");
  }
  return slice_rows(table, 0, length);
}

Tensor replicate(const Tensor& table, std::size_t new_len) {
  const std::size_t rows = table.dim(0), d = table.dim(1);
  if (new_len < rows) {
    throw DimensionError("replicate target " + std::to_string(new_len) + " is shorter than the table (" +
                         std::to_string(rows) + ")");
  }
  std::vector<double> out(new_len * d);
  auto src = table.data();
  for (std::size_t p = 0; p < new_len; ++p) std::copy_n(src.data() + (p % rows) * d, d, out.data() + p * d);
  return Tensor({new_len, d}, std::move(out), table.requires_grad());
}

Tensor rope_apply(const Tensor& x, std::span<const std::int64_t> positions, double factor) {
  if (x.rank() != 3) throw DimensionError("rope_apply expects [h, L, d], got " + to_string(x.shape()));
  const std::size_t heads = x.dim(0), len = x.dim(1), d = x.dim(2);
  if (d % 2 != 0) throw DimensionError("rope_apply needs an even head dim, got " + std::to_string(d));
  if (positions.size() != len) throw DimensionError("rope_apply: positions do not match sequence length");
  std::vector<double> cos_t(len * d / 2), sin_t(len * d / 2);
  for (std::size_t r = 0; r < len; ++r) {
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double theta = std::pow(factor, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      const double angle = static_cast<double>(positions[r]) * theta;
      cos_t[r * d / 2 + i] = std::cos(angle);
      sin_t[r * d / 2 + i] = std::sin(angle);
    }
  }
  std::vector<double> out(x.size());
  auto px = x.data();
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t r = 0; r < len; ++r) {
      const double* src = px.data() + (h * len + r) * d;
      double* dst = out.data() + (h * len + r) * d;
      for (std::size_t i = 0; i < d / 2; ++i) {
        const double c = cos_t[r * d / 2 + i], s = sin_t[r * d / 2 + i];
        dst[2 * i] = src[2 * i] * c - src[2 * i + 1] * s;
        dst[2 * i + 1] = src[2 * i] * s + src[2 * i + 1] * c;
      }
    }
  }
  return record(x.shape(), std::move(out), {x},
                [cos_t = std::move(cos_t), sin_t = std::move(sin_t), heads, len, d](std::span<const double> g, BackwardContext& ctx) {
                  auto gx = ctx.grad(0);
                  for (std::size_t h = 0; h < heads; ++h) {
                    for (std::size_t r = 0; r < len; ++r) {
                      const double* gr = g.data() + (h * len + r) * d;
                      double* dst = gx.data() + (h * len + r) * d;
                      for (std::size_t i = 0; i < d / 2; ++i) {
                        const double c = cos_t[r * d / 2 + i], s = sin_t[r * d / 2 + i];
                        dst[2 * i] += gr[2 * i] * c + gr[2 * i + 1] * s;
                        dst[2 * i + 1] += -gr[2 * i] * s + gr[2 * i + 1] * c;
                      }
                    }
                  }
                });
}

int t5_bucket(std::int64_t relative, int num_buckets, int max_distance, bool bidirectional) {
  int bucket = 0;
  std::int64_t n = -relative;
  if (bidirectional) {
    num_buckets /= 2;
    if (n < 0) bucket += num_buckets;
    n = std::abs(n);
  } else {
    n = std::max<std::int64_t>(n, 0);
  }
  const int max_exact = num_buckets / 2;
  if (n < max_exact) return bucket + static_cast<int>(n);
  const double scaled = std::log(static_cast<double>(n) / max_exact) /
                        std::log(static_cast<double>(max_distance) / max_exact) * (num_buckets - max_exact);
  const int large = std::min(max_exact + static_cast<int>(scaled), num_buckets - 1);
  return bucket + large;
}

Tensor t5_relative_bias(std::size_t query_len, std::size_t key_len, int num_buckets, int max_distance,
                        const Tensor& table, bool bidirectional) {
  if (table.rank() != 2 || table.dim(1) != static_cast<std::size_t>(num_buckets)) {
    throw DimensionError("relative bias table " + to_string(table.shape()) + " does not have " +
                         std::to_string(num_buckets) + " buckets");
  }
  const std::size_t heads = table.dim(0);
  std::vector<int> buckets(query_len * key_len);
  for (std::size_t i = 0; i < query_len; ++i)
    for (std::size_t j = 0; j < key_len; ++j)
      buckets[i * key_len + j] = t5_bucket(static_cast<std::int64_t>(j) - static_cast<std::int64_t>(i), num_buckets,
                                           max_distance, bidirectional);
  std::vector<double> out(heads * query_len * key_len);
  auto pt = table.data();
  const auto nb = static_cast<std::size_t>(num_buckets);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t e = 0; e < buckets.size(); ++e) out[h * buckets.size() + e] = pt[h * nb + static_cast<std::size_t>(buckets[e])];
  return record({heads, query_len, key_len}, std::move(out), {table},
                [buckets = std::move(buckets), heads, nb](std::span<const double> g, BackwardContext& ctx) {
                  auto gt = ctx.grad(0);
                  for (std::size_t h = 0; h < heads; ++h)
                    for (std::size_t e = 0; e < buckets.size(); ++e) gt[h * nb + static_cast<std::size_t>(buckets[e])] += g[h * buckets.size() + e];
                });
}

}  // namespace longattn
