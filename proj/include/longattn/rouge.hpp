#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace longattn {

using TokenSeq = std::vector<std::int64_t>;

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// 2pr / (p + r), 0 when p + r == 0.
double f_measure(double precision, double recall);

/// Clipped n-gram overlap. Empty reference or candidate scores zero.
RougeScore rouge_n(std::span<const std::int64_t> cand, std::span<const std::int64_t> ref, int n);

std::size_t lcs_length(std::span<const std::int64_t> a, std::span<const std::int64_t> b);

/// Sequence-level LCS.
RougeScore rouge_l(std::span<const std::int64_t> cand, std::span<const std::int64_t> ref);

/// Summary-level LCS: for every reference line, the union of its LCS
/// positions against each candidate line; hits are clipped by token counts.
RougeScore rouge_lsum(const std::vector<TokenSeq>& cand_lines, const std::vector<TokenSeq>& ref_lines);

/// Splits after every `sep` token (kept at the end of its line).
std::vector<TokenSeq> split_lines(std::span<const std::int64_t> seq, std::int64_t sep);

struct RougePair {
  TokenSeq cand;
  TokenSeq ref;
};

struct RougeReport {
  RougeScore r1, r2, rl, rlsum;  // means over examples
  double rg = 0.0;                // geometric mean of r1, r2 and rl (or rlsum) f1
  bool rg_uses_lsum = false;
  std::size_t n_examples = 0;
};

struct PairScores {
  RougeScore r1, r2, rl, rlsum;
};

PairScores score_pair(const RougePair& pair, std::int64_t line_sep);

RougeReport corpus_report(const std::vector<RougePair>& pairs, std::int64_t line_sep, bool rg_uses_lsum = false);

double geometric_mean(double a, double b, double c);

}  // namespace longattn
