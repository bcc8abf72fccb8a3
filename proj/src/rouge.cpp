#include "longattn/rouge.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "longattn/errors.hpp"

namespace longattn {

namespace {

using Table = std::vector<std::vector<std::size_t>>;

// t[i][j] = LCS of a[:i] and b[:j]
Table lcs_table(std::span<const std::int64_t> a, std::span<const std::int64_t> b) {
  Table t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
    }
  }
  return t;
}

// positions in `ref` of one LCS with `cand`, same tie-breaking as the
// reference rouge-score implementation
std::vector<std::size_t> lcs_positions(std::span<const std::int64_t> ref, std::span<const std::int64_t> cand) {
  const auto t = lcs_table(ref, cand);
  std::vector<std::size_t> out;
  std::size_t i = ref.size(), j = cand.size();
  while (i > 0 && j > 0) {
    if (ref[i - 1] == cand[j - 1]) {
      out.push_back(i - 1);
      --i;
      --j;
    } else if (t[i][j - 1] > t[i - 1][j]) {
      --j;
    } else {
      --i;
    }
  }
  std::reverse(out.begin(), out.end());
  return out;
}

RougeScore from_counts(double hits, std::size_t cand_total, std::size_t ref_total) {
  RougeScore s;
  if (cand_total == 0 || ref_total == 0) return s;
  s.precision = hits / static_cast<double>(cand_total);
  s.recall = hits / static_cast<double>(ref_total);
  s.f1 = f_measure(s.precision, s.recall);
  return s;
}

void accumulate(RougeScore& into, const RougeScore& s) {
  into.precision += s.precision;
  into.recall += s.recall;
  into.f1 += s.f1;
}

void divide(RougeScore& s, double n) {
  s.precision /= n;
  s.recall /= n;
  s.f1 /= n;
}

}  // namespace

double f_measure(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

RougeScore rouge_n(std::span<const std::int64_t> cand, std::span<const std::int64_t> ref, int n) {
  if (n < 1) throw ConfigError("rouge_n: n must be >= 1");
  const auto order = static_cast<std::size_t>(n);
  auto grams = [order](std::span<const std::int64_t> seq) {
    std::map<std::vector<std::int64_t>, std::size_t> counts;
    for (std::size_t i = 0; i + order <= seq.size(); ++i) ++counts[std::vector<std::int64_t>(seq.begin() + i, seq.begin() + i + order)];
    return counts;
  };
  const auto c = grams(cand), r = grams(ref);
  std::size_t overlap = 0, c_total = 0, r_total = 0;
  for (const auto& [g, k] : c) {
    c_total += k;
    if (const auto it = r.find(g); it != r.end()) overlap += std::min(k, it->second);
  }
  for (const auto& [g, k] : r) r_total += k;
  return from_counts(static_cast<double>(overlap), c_total, r_total);
}

std::size_t lcs_length(std::span<const std::int64_t> a, std::span<const std::int64_t> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(std::span<const std::int64_t> cand, std::span<const std::int64_t> ref) {
  return from_counts(static_cast<double>(lcs_length(cand, ref)), cand.size(), ref.size());
}

RougeScore rouge_lsum(const std::vector<TokenSeq>& cand_lines, const std::vector<TokenSeq>& ref_lines) {
  std::unordered_map<std::int64_t, std::size_t> cand_counts, ref_counts;
  std::size_t cand_total = 0, ref_total = 0;
  for (const auto& line : cand_lines) {
    cand_total += line.size();
    for (auto t : line) ++cand_counts[t];
  }
  for (const auto& line : ref_lines) {
    ref_total += line.size();
    for (auto t : line) ++ref_counts[t];
  }
  std::size_t hits = 0;
  for (const auto& ref : ref_lines) {
    std::set<std::size_t> lcs_union;
    for (const auto& cand : cand_lines) {
      const auto pos = lcs_positions(ref, cand);
      lcs_union.insert(pos.begin(), pos.end());
    }
    for (std::size_t i : lcs_union) {
      const auto t = ref[i];
      auto& c = cand_counts[t];
      auto& r = ref_counts[t];
      if (c > 0 && r > 0) {
        ++hits;
        --c;
        --r;
      }
    }
  }
  return from_counts(static_cast<double>(hits), cand_total, ref_total);
}

std::vector<TokenSeq> split_lines(std::span<const std::int64_t> seq, std::int64_t sep) {
  std::vector<TokenSeq> lines;
  TokenSeq cur;
  for (auto t : seq) {
    cur.push_back(t);
    if (t == sep) {
      lines.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) lines.push_back(std::move(cur));
  return lines;
}

double geometric_mean(double a, double b, double c) {
  if (a <= 0.0 || b <= 0.0 || c <= 0.0) return 0.0;
  return std::cbrt(a * b * c);
}

PairScores score_pair(const RougePair& pair, std::int64_t line_sep) {
  PairScores s;
  s.r1 = rouge_n(pair.cand, pair.ref, 1);
  s.r2 = rouge_n(pair.cand, pair.ref, 2);
  s.rl = rouge_l(pair.cand, pair.ref);
  s.rlsum = rouge_lsum(split_lines(pair.cand, line_sep), split_lines(pair.ref, line_sep));
  return s;
}

RougeReport corpus_report(const std::vector<RougePair>& pairs, std::int64_t line_sep, bool rg_uses_lsum) {
  RougeReport report;
  report.rg_uses_lsum = rg_uses_lsum;
  report.n_examples = pairs.size();
  if (pairs.empty()) return report;
  for (const auto& p : pairs) {
    const auto s = score_pair(p, line_sep);
    accumulate(report.r1, s.r1);
    accumulate(report.r2, s.r2);
    accumulate(report.rl, s.rl);
    accumulate(report.rlsum, s.rlsum);
  }
  const auto n = static_cast<double>(pairs.size());
  for (auto* s : {&report.r1, &report.r2, &report.rl, &report.rlsum}) divide(*s, n);
  report.rg = geometric_mean(report.r1.f1, report.r2.f1, rg_uses_lsum ? report.rlsum.f1 : report.rl.f1);
  return report;
}

}  // namespace longattn
