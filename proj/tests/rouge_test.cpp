#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "longattn/errors.hpp"
#include "longattn/rng.hpp"
#include "longattn/rouge.hpp"
#include "oracles.hpp"

namespace {

using namespace longattn;

TokenSeq random_seq(Rng& rng, std::size_t max_len, std::int64_t vocab) {
  TokenSeq s(rng.below(max_len + 1));
  for (auto& t : s) t = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(vocab)));
  return s;
}

using oracle::brute_lcs;
using oracle::matching_overlap;

TEST(RougeN, IdenticalAndDisjoint) {
  const TokenSeq a{6, 7, 8, 9, 6};
  for (int n : {1, 2, 3}) {
    const auto s = rouge_n(a, a, n);
    EXPECT_DOUBLE_EQ(s.precision, 1.0);
    EXPECT_DOUBLE_EQ(s.recall, 1.0);
    EXPECT_DOUBLE_EQ(s.f1, 1.0);
  }
  const auto s = rouge_n(a, TokenSeq{10, 11, 12}, 1);
  EXPECT_EQ(s.f1, 0.0);
  EXPECT_EQ(s.precision, 0.0);
}

TEST(RougeN, ClippedCounts) {
  const auto s = rouge_n(TokenSeq{1, 2, 1}, TokenSeq{1, 1, 2}, 1);
  EXPECT_DOUBLE_EQ(s.precision, 1.0);
  EXPECT_DOUBLE_EQ(s.recall, 1.0);
  const auto t = rouge_n(TokenSeq{1, 1, 1, 1}, TokenSeq{1, 2}, 1);
  EXPECT_DOUBLE_EQ(t.precision, 0.25);
  EXPECT_DOUBLE_EQ(t.recall, 0.5);
}

TEST(RougeN, EdgeCases) {
  EXPECT_THROW(rouge_n(TokenSeq{1}, TokenSeq{1}, 0), ConfigError);
  const auto s = rouge_n(TokenSeq{1, 2}, TokenSeq{}, 1);
  EXPECT_EQ(s.precision, 0.0);
  EXPECT_EQ(s.recall, 0.0);
  EXPECT_EQ(s.f1, 0.0);
  EXPECT_EQ(rouge_n(TokenSeq{}, TokenSeq{}, 2).f1, 0.0);
  EXPECT_EQ(rouge_n(TokenSeq{1}, TokenSeq{1}, 2).f1, 0.0);
}

TEST(RougeN, MatchesMatchingOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto c = random_seq(rng, 14, 5), r = random_seq(rng, 14, 5);
    for (std::size_t n : {1u, 2u, 3u}) {
      const auto s = rouge_n(c, r, static_cast<int>(n));
      const double hits = static_cast<double>(matching_overlap(c, r, n));
      const double cn = c.size() >= n ? static_cast<double>(c.size() - n + 1) : 0.0;
      const double rn = r.size() >= n ? static_cast<double>(r.size() - n + 1) : 0.0;
      const double p = cn > 0 && rn > 0 ? hits / cn : 0.0;
      const double rec = cn > 0 && rn > 0 ? hits / rn : 0.0;
      ASSERT_DOUBLE_EQ(s.precision, p);
      ASSERT_DOUBLE_EQ(s.recall, rec);
      ASSERT_DOUBLE_EQ(s.f1, p + rec > 0 ? 2 * p * rec / (p + rec) : 0.0);
    }
  }
}

TEST(RougeL, IdenticalAndReversed) {
  const TokenSeq a{6, 7, 8, 9, 10};
  EXPECT_DOUBLE_EQ(rouge_l(a, a).f1, 1.0);
  const TokenSeq rev(a.rbegin(), a.rend());
  const auto s = rouge_l(rev, a);
  EXPECT_DOUBLE_EQ(s.precision, 1.0 / 5);
  EXPECT_DOUBLE_EQ(s.recall, 1.0 / 5);
}

TEST(RougeL, MatchesSubsetEnumeration) {
  Rng rng(6);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto c = random_seq(rng, 11, 4), r = random_seq(rng, 11, 4);
    const auto lcs = brute_lcs(c, r);
    ASSERT_EQ(lcs_length(c, r), lcs);
    ASSERT_EQ(lcs_length(r, c), lcs);
    const auto s = rouge_l(c, r);
    if (!c.empty() && !r.empty()) {
      ASSERT_DOUBLE_EQ(s.precision, static_cast<double>(lcs) / static_cast<double>(c.size()));
      ASSERT_DOUBLE_EQ(s.recall, static_cast<double>(lcs) / static_cast<double>(r.size()));
    }
  }
}

TEST(Rouge, SwappingArgumentsSwapsPrecisionAndRecall) {
  Rng rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const auto c = random_seq(rng, 12, 6), r = random_seq(rng, 12, 6);
    for (int n : {1, 2}) {
      const auto a = rouge_n(c, r, n), b = rouge_n(r, c, n);
      ASSERT_DOUBLE_EQ(a.precision, b.recall);
      ASSERT_DOUBLE_EQ(a.f1, b.f1);
    }
    const auto a = rouge_l(c, r), b = rouge_l(r, c);
    ASSERT_DOUBLE_EQ(a.recall, b.precision);
    ASSERT_DOUBLE_EQ(a.f1, b.f1);
    const auto la = rouge_lsum(split_lines(c, 6), split_lines(r, 6));
    const auto lb = rouge_lsum(split_lines(r, 6), split_lines(c, 6));
    ASSERT_NEAR(la.f1, lb.f1, 1e-12);
  }
}

TEST(Rouge, LsumEqualsLOnSingleLines) {
  Rng rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    const auto c = random_seq(rng, 12, 5), r = random_seq(rng, 12, 5);
    const auto l = rouge_l(c, r);
    const auto ls = rouge_lsum({c}, {r});
    ASSERT_DOUBLE_EQ(l.precision, ls.precision);
    ASSERT_DOUBLE_EQ(l.recall, ls.recall);
  }
}

TEST(Rouge, AppendingReferenceTokenNeverLowersRecall) {
  Rng rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    auto c = random_seq(rng, 10, 5);
    const auto r = random_seq(rng, 10, 5);
    if (r.empty()) continue;
    const auto before1 = rouge_n(c, r, 1).recall, before2 = rouge_n(c, r, 2).recall, beforel = rouge_l(c, r).recall;
    c.push_back(r[rng.below(r.size())]);
    ASSERT_GE(rouge_n(c, r, 1).recall, before1);
    ASSERT_GE(rouge_n(c, r, 2).recall, before2);
    ASSERT_GE(rouge_l(c, r).recall, beforel);
  }
}

TEST(Rouge, SplitLines) {
  const auto lines = split_lines(TokenSeq{6, 4, 7, 8, 4, 9}, 4);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], (TokenSeq{6, 4}));
  EXPECT_EQ(lines[1], (TokenSeq{7, 8, 4}));
  EXPECT_EQ(lines[2], (TokenSeq{9}));
  EXPECT_TRUE(split_lines(TokenSeq{}, 4).empty());
}

TEST(Rouge, MatchesReferencePackage) {
  std::ifstream in(LONGATTN_FIXTURE_DIR "/rouge_reference.json");
  ASSERT_TRUE(in.good());
  const auto cases = nlohmann::json::parse(in);
  ASSERT_GE(cases.size(), 300u);
  for (const auto& c : cases) {
    const auto cand_lines = c["cand"].get<std::vector<TokenSeq>>();
    const auto ref_lines = c["ref"].get<std::vector<TokenSeq>>();
    TokenSeq cand, ref;
    for (const auto& l : cand_lines) cand.insert(cand.end(), l.begin(), l.end());
    for (const auto& l : ref_lines) ref.insert(ref.end(), l.begin(), l.end());
    auto check = [&](const RougeScore& s, const char* key) {
      const auto want = c[key].get<std::vector<double>>();
      ASSERT_NEAR(s.precision, want[0], 1e-12) << key << " " << c.dump();
      ASSERT_NEAR(s.recall, want[1], 1e-12) << key << " " << c.dump();
      ASSERT_NEAR(s.f1, want[2], 1e-12) << key << " " << c.dump();
    };
    check(rouge_n(cand, ref, 1), "rouge1");
    check(rouge_n(cand, ref, 2), "rouge2");
    check(rouge_l(cand, ref), "rougeL");
    check(rouge_lsum(cand_lines, ref_lines), "rougeLsum");
  }
}

TEST(Report, SinglePairAndMeans) {
  const RougePair p{{6, 7, 4, 8}, {6, 7, 8, 4}};
  const auto s = score_pair(p, 4);
  const auto rep = corpus_report({p}, 4);
  EXPECT_EQ(rep.n_examples, 1u);
  EXPECT_DOUBLE_EQ(rep.r1.f1, s.r1.f1);
  EXPECT_DOUBLE_EQ(rep.r2.f1, s.r2.f1);
  EXPECT_DOUBLE_EQ(rep.rl.f1, s.rl.f1);
  EXPECT_DOUBLE_EQ(rep.rlsum.f1, s.rlsum.f1);

  const auto two = corpus_report({{{6, 7}, {6, 7}}, {{6, 7}, {8, 9}}}, 4);
  EXPECT_DOUBLE_EQ(two.r1.f1, 0.5);
  EXPECT_DOUBLE_EQ(two.rl.recall, 0.5);
  EXPECT_EQ(corpus_report({}, 4).n_examples, 0u);
}

TEST(Report, GeometricMean) {
  EXPECT_NEAR(geometric_mean(0.25, 0.04, 0.09), 0.0965489, 1e-7);
  EXPECT_NEAR(geometric_mean(0.25, 0.04, 0.09), std::cbrt(0.25 * 0.04 * 0.09), 1e-15);
  EXPECT_EQ(geometric_mean(0.5, 0.0, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(geometric_mean(0.3, 0.3, 0.3), 0.3);

  const std::vector<RougePair> pairs{{{6, 7, 4, 8, 9}, {8, 9, 4, 6, 7}}, {{6, 8, 7}, {6, 7, 8}}};
  const auto rep = corpus_report(pairs, 4);
  EXPECT_DOUBLE_EQ(rep.rg, geometric_mean(rep.r1.f1, rep.r2.f1, rep.rl.f1));
  const auto rep_sum = corpus_report(pairs, 4, true);
  EXPECT_TRUE(rep_sum.rg_uses_lsum);
  EXPECT_DOUBLE_EQ(rep_sum.rg, geometric_mean(rep.r1.f1, rep.r2.f1, rep.rlsum.f1));
  EXPECT_GT(rep.rlsum.f1, rep.rl.f1);
}

}  // namespace
