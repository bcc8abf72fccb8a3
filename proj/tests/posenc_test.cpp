#include "longattn/posenc.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "longattn/attention.hpp"
#include "testing.hpp"

using namespace longattn;
using longattn::testing::max_abs_diff;
using longattn::testing::random_tensor;

namespace {

double dot_row(std::span<const double> a, std::span<const double> b, std::size_t row, std::size_t d) {
  double s = 0.0;
  for (std::size_t c = 0; c < d; ++c) s += a[row * d + c] * b[row * d + c];
  return s;
}

}  // namespace

TEST(Sinusoidal, PositionZero) {
  const Tensor pe = sinusoidal(3, 8);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(pe.data()[c], c % 2 == 0 ? 0.0 : 1.0);
}

TEST(Sinusoidal, SmallWidthValues) {
  const Tensor pe = sinusoidal(2, 4, 10000.0);
  auto row = pe.data().subspan(4, 4);
  EXPECT_NEAR(row[0], std::sin(1.0), 1e-15);
  EXPECT_NEAR(row[1], std::cos(1.0), 1e-15);
  EXPECT_NEAR(row[2], std::sin(1e-2), 1e-15);
  EXPECT_NEAR(row[3], std::cos(1e-2), 1e-15);
}

TEST(Sinusoidal, RotationRelation) {
  const std::size_t d = 16;
  const double factor = 10000.0;
  const Tensor pe = sinusoidal(300, d, factor);
  auto v = pe.data();
  for (std::size_t p : {0u, 7u, 100u}) {
    for (std::size_t delta : {1u, 13u, 150u}) {
      for (std::size_t i = 0; i < d / 2; ++i) {
        const double w = std::pow(factor, -2.0 * static_cast<double>(i) / d) * static_cast<double>(delta);
        const double s = v[p * d + 2 * i], c = v[p * d + 2 * i + 1];
        EXPECT_NEAR(v[(p + delta) * d + 2 * i], s * std::cos(w) + c * std::sin(w), 1e-10);
        EXPECT_NEAR(v[(p + delta) * d + 2 * i + 1], c * std::cos(w) - s * std::sin(w), 1e-10);
      }
    }
  }
}

TEST(Sinusoidal, LongTableFiniteAndFrequencyDecreasing) {
  const std::size_t d = 64;
  const Tensor pe = sinusoidal(16384, d);
  for (double x : pe.data()) ASSERT_TRUE(std::isfinite(x));
  // recover each pair's frequency from the angle step between rows 0 and 1
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < d / 2; ++i) {
    const double w = std::atan2(pe.data()[d + 2 * i], pe.data()[d + 2 * i + 1]);
    EXPECT_LT(w, prev);
    prev = w;
  }
}

TEST(Sinusoidal, OddWidthRejected) { EXPECT_THROW(sinusoidal(4, 5), DimensionError); }

TEST(Learned, LookupAndOverflow) {
  Rng rng(3);
  const Tensor table = random_tensor({16, 4}, rng);
  const Tensor first = learned_absolute(table, 10);
  EXPECT_EQ(first.shape(), (Shape{10, 4}));
  EXPECT_EQ(max_abs_diff(first.data(), table.data().subspan(0, 40)), 0.0);
  EXPECT_THROW(learned_absolute(table, 17), DimensionError);
}

TEST(Learned, ReplicateDoubles) {
  Rng rng(4);
  const Tensor table = random_tensor({512, 6}, rng);
  const Tensor big = replicate(table, 1024);
  auto v = big.data();
  for (std::size_t p = 0; p < 512; ++p)
    for (std::size_t c = 0; c < 6; ++c) ASSERT_EQ(v[p * 6 + c], v[(p + 512) * 6 + c]);
}

TEST(Learned, ReplicateTruncatesFinalCopy) {
  Rng rng(5);
  const Tensor table = random_tensor({512, 6}, rng);
  const Tensor big = replicate(table, 700);
  EXPECT_EQ(big.dim(0), 700u);
  auto v = big.data();
  for (std::size_t p = 512; p < 700; ++p)
    for (std::size_t c = 0; c < 6; ++c) ASSERT_EQ(v[p * 6 + c], table.data()[(p - 512) * 6 + c]);
  EXPECT_THROW(replicate(table, 100), DimensionError);
}

TEST(Rope, ZeroPositionIsIdentity) {
  Rng rng(6);
  const Tensor x = random_tensor({2, 5, 8}, rng);
  const std::vector<std::int64_t> pos(5, 0);
  EXPECT_EQ(max_abs_diff(rope_apply(x, pos).data(), x.data()), 0.0);
}

TEST(Rope, PreservesNorm) {
  Rng rng(7);
  const Tensor x = random_tensor({3, 9, 16}, rng);
  std::vector<std::int64_t> pos(9);
  std::iota(pos.begin(), pos.end(), 1000);
  const Tensor y = rope_apply(x, pos);
  for (std::size_t r = 0; r < 27; ++r) {
    EXPECT_NEAR(std::sqrt(dot_row(y.data(), y.data(), r, 16)), std::sqrt(dot_row(x.data(), x.data(), r, 16)), 1e-10);
  }
}

TEST(Rope, DotProductDependsOnlyOnOffset) {
  Rng rng(8);
  const std::size_t d = 32;
  const Tensor q = random_tensor({1, 1, d}, rng);
  const Tensor k = random_tensor({1, 1, d}, rng);
  auto score = [&](std::int64_t pq, std::int64_t pk) {
    const std::vector<std::int64_t> a{pq}, b{pk};
    const Tensor rq = rope_apply(q, a), rk = rope_apply(k, b);
    return dot_row(rq.data(), rk.data(), 0, d);
  };
  for (std::int64_t offset : {0, 1, 5, 37, 512, 4096}) {
    const double base = score(offset, 0);
    for (std::int64_t shift : {1, 100, 1000, 4096}) {
      EXPECT_NEAR(score(offset + shift, shift), base, 1e-8) << "offset " << offset << " shift " << shift;
      EXPECT_NEAR(score(shift, offset + shift), score(0, offset), 1e-8);
    }
  }
}

TEST(Rope, OddHeadDimRejected) {
  Rng rng(9);
  const Tensor x = random_tensor({1, 2, 5}, rng);
  const std::vector<std::int64_t> pos{0, 1};
  EXPECT_THROW(rope_apply(x, pos), DimensionError);
}

TEST(T5Bucket, ZeroDistanceIsBucketZero) {
  EXPECT_EQ(t5_bucket(0, 32, 128, true), 0);
  EXPECT_EQ(t5_bucket(0, 32, 128, false), 0);
}

TEST(T5Bucket, ExactRegionIsInjective) {
  // bidirectional: num_buckets/4 exact offsets on each side
  std::set<int> seen;
  for (std::int64_t r = -7; r <= 7; ++r) seen.insert(t5_bucket(r, 32, 128, true));
  EXPECT_EQ(seen.size(), 15u);
  // unidirectional (decoder, keys at or before the query): num_buckets/2 exact offsets
  seen.clear();
  for (std::int64_t r = -15; r <= 0; ++r) seen.insert(t5_bucket(r, 32, 128, false));
  EXPECT_EQ(seen.size(), 16u);
}

TEST(T5Bucket, RangeAndMonotone) {
  for (bool bidir : {true, false}) {
    int prev = -1;
    for (std::int64_t n = 0; n < 2000; ++n) {
      const int b = t5_bucket(-n, 32, 128, bidir);
      ASSERT_GE(b, prev);
      ASSERT_LT(b, bidir ? 16 : 32);
      prev = b;
    }
    EXPECT_EQ(t5_bucket(-5000, 32, 128, bidir), bidir ? 15 : 31);
  }
  // future keys in the causal table collapse to bucket 0
  EXPECT_EQ(t5_bucket(9, 32, 128, false), 0);
  EXPECT_GE(t5_bucket(9, 32, 128, true), 16);
}

TEST(T5Bias, GathersTableEntries) {
  Rng rng(10);
  const Tensor table = random_tensor({2, 8}, rng);
  const Tensor bias = t5_relative_bias(5, 6, 8, 20, table, true);
  EXPECT_EQ(bias.shape(), (Shape{2, 5, 6}));
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        const int b = t5_bucket(static_cast<std::int64_t>(j) - static_cast<std::int64_t>(i), 8, 20, true);
        ASSERT_EQ(bias.data()[(h * 5 + i) * 6 + j], table.data()[h * 8 + b]);
      }
  EXPECT_THROW(t5_relative_bias(3, 3, 16, 20, table, true), DimensionError);
}

TEST(T5Bias, ZeroTableMatchesNoEncoding) {
  Rng rng(11);
  const Tensor q = random_tensor({2, 7, 4}, rng), k = random_tensor({2, 7, 4}, rng), v = random_tensor({2, 7, 4}, rng);
  BiasSpec spec{Tensor({2, 32}, std::vector<double>(64, 0.0)), 32, 128, true};
  const Tensor plain = full_attention(q, k, v);
  const Tensor biased = full_attention(q, k, v, nullptr, &spec);
  EXPECT_EQ(max_abs_diff(plain.data(), biased.data()), 0.0);
}

TEST(NoneEncoding, Identity) {
  Rng rng(12);
  const Tensor x = random_tensor({4, 3}, rng);
  EXPECT_EQ(max_abs_diff(none_encoding(x).data(), x.data()), 0.0);
}

TEST(PosEncConfig, Validation) {
  PosEncConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.sinusoidal_factor = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.t5_num_buckets = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.t5_max_distance = 32;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(parse_pos_scheme("rope"), PosScheme::RoPE);
  EXPECT_THROW(parse_pos_scheme("alibi"), ConfigError);
}

TEST(PosEncGrad, RopeAndBias) {
  Rng rng(13);
  const std::vector<std::int64_t> pos{3, 0, 9, 40};
  const double e1 = longattn::testing::gradient_error(
      [&](const std::vector<Tensor>& in) { return longattn::testing::probe_loss(rope_apply(in[0], pos)); },
      {random_tensor({2, 4, 6}, rng)});
  EXPECT_LT(e1, 1e-6);
  const double e2 = longattn::testing::gradient_error(
      [&](const std::vector<Tensor>& in) {
        return longattn::testing::probe_loss(t5_relative_bias(4, 5, 8, 20, in[0], false));
      },
      {random_tensor({2, 8}, rng)});
  EXPECT_LT(e2, 1e-6);
}
