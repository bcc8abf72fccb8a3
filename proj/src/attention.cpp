#include "longattn/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "longattn/kernels.hpp"
#include "longattn/ops.hpp"
#include "longattn/posenc.hpp"

namespace longattn {

std::string to_string(AttentionVariant variant) {
  switch (variant) {
    case AttentionVariant::Full: return "full";
    case AttentionVariant::BlockLocal: return "block_local";
    case AttentionVariant::GlobalLocal: return "global_local";
  }
  return "?";
}

AttentionVariant parse_attention_variant(const std::string& name) {
  for (auto v : {AttentionVariant::Full, AttentionVariant::BlockLocal, AttentionVariant::GlobalLocal}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown attention variant '" + name + "' (full|block_local|global_local)");
}

void AttentionSpec::validate() const {
  if (num_heads == 0 || head_dim == 0) throw ConfigError("attention needs positive num_heads and head_dim");
  if (variant != AttentionVariant::Full && block_size == 0) throw ConfigError("attention.block_size must be >= 1");
  if (variant == AttentionVariant::GlobalLocal && num_global == 0) {
    throw ConfigError("global_local attention needs num_global >= 1 (use block_local for g = 0)");
  }
  if (staggered && variant != AttentionVariant::Full && block_size % 2 != 0) {
    throw ConfigError("staggered blocks need an even block_size, got " + std::to_string(block_size));
  }
}

BlockLayout make_block_layout(std::size_t seq_len, std::size_t block_size, std::size_t layer_index, bool staggered) {
  if (seq_len == 0) throw DimensionError("block layout needs at least one position");
  if (block_size == 0) throw ConfigError("block_size must be >= 1");
  if (staggered && block_size % 2 != 0) {
    throw ConfigError("staggered layout needs an even block size, got " + std::to_string(block_size));
  }
  BlockLayout layout;
  layout.seq_len = seq_len;
  layout.block_size = block_size;
  layout.offset = (staggered && layer_index % 2 == 1) ? block_size / 2 : 0;
  layout.pad_left = layout.offset;
  const std::size_t used = layout.pad_left + seq_len;
  layout.pad_right = (block_size - used % block_size) % block_size;
  layout.block_index.resize(seq_len);
  for (std::size_t i = 0; i < seq_len; ++i) layout.block_index[i] = (i + layout.offset) / block_size;
  return layout;
}

AttentionPattern AttentionPattern::dense(std::size_t num_queries, std::size_t num_keys) {
  AttentionPattern p;
  p.num_queries = num_queries;
  p.num_keys = num_keys;
  p.groups.push_back({0, num_queries, {{0, num_keys, true}}});
  return p;
}

std::size_t AttentionPattern::score_elements() const {
  std::size_t total = 0;
  for (const QueryGroup& g : groups) {
    std::size_t valid_rows = 0;
    for (std::size_t i = g.begin; i < g.end; ++i) valid_rows += query_valid.empty() || query_valid[i];
    for (const KeySpan& s : g.keys) total += (s.end - s.begin) * (s.tile ? g.end - g.begin : valid_rows);
  }
  return total;
}

namespace {

thread_local AttentionCounters counters;

struct KernelShape {
  std::size_t heads, nq, nk, d, dv;
};

// Probability buffer layout: each group owns rows x row_len consecutive
// entries per head, ordered like its spans.
struct ProbLayout {
  std::vector<std::size_t> group_base;
  std::vector<std::size_t> row_len;
  std::size_t per_head = 0;
};

ProbLayout make_prob_layout(const AttentionPattern& p) {
  ProbLayout layout;
  for (const QueryGroup& g : p.groups) {
    std::size_t len = 0;
    for (const KeySpan& s : g.keys) len += s.end - s.begin;
    layout.group_base.push_back(layout.per_head);
    layout.row_len.push_back(len);
    layout.per_head += len * (g.end - g.begin);
  }
  return layout;
}

// Bucket lookup by relative distance, precomputed over the reachable range.
struct BucketTable {
  std::int64_t lo = 0;
  std::vector<int> bucket;
  int at(std::int64_t rel) const { return bucket[static_cast<std::size_t>(rel - lo)]; }
};

BucketTable make_bucket_table(const RelativeBias& bias) {
  std::int64_t qmin = 0, qmax = 0, kmin = 0, kmax = 0;
  for (auto p : bias.query_pos) {
    if (p < 0) continue;
    qmin = std::min(qmin, p);
    qmax = std::max(qmax, p);
  }
  for (auto p : bias.key_pos) {
    if (p < 0) continue;
    kmin = std::min(kmin, p);
    kmax = std::max(kmax, p);
  }
  BucketTable table;
  table.lo = kmin - qmax;
  const std::int64_t hi = kmax - qmin;
  table.bucket.resize(static_cast<std::size_t>(hi - table.lo + 1));
  for (std::int64_t rel = table.lo; rel <= hi; ++rel) {
    table.bucket[static_cast<std::size_t>(rel - table.lo)] =
        t5_bucket(rel, bias.spec->num_buckets, bias.spec->max_distance, bias.spec->bidirectional);
  }
  return table;
}

struct KernelArgs {
  const AttentionPattern& pattern;
  const ProbLayout& layout;
  KernelShape shape;
  double scale;
  const RelativeBias* bias;
  const BucketTable* buckets;
};

inline bool entry_masked(const AttentionPattern& p, std::size_t i, std::size_t j, bool query_ok) {
  if (!query_ok) return true;
  if (!p.key_valid.empty() && !p.key_valid[j]) return true;
  if (p.causal && j > i) return true;
  if (!p.allowed.empty() && !p.allowed[i * p.num_keys + j]) return true;
  return false;
}

// Forward for one head. Writes probabilities into `probs` (this head's
// slice) and the head's output rows. Returns {macs, score entries}.
AttentionCounters forward_head(const KernelArgs& a, std::size_t h, const double* q, const double* k, const double* v,
                               const double* table, double* probs, double* out) {
  const auto& p = a.pattern;
  const auto [heads, nq, nk, d, dv] = a.shape;
  (void)heads;
  AttentionCounters local;
  std::vector<double> logits;
  std::vector<std::uint8_t> computed;
  for (std::size_t gi = 0; gi < p.groups.size(); ++gi) {
    const QueryGroup& g = p.groups[gi];
    const std::size_t row_len = a.layout.row_len[gi];
    logits.assign(row_len, 0.0);
    computed.assign(row_len, 0);
    for (std::size_t i = g.begin; i < g.end; ++i) {
      const bool query_ok = p.query_valid.empty() || p.query_valid[i];
      const double* qi = q + (h * nq + i) * d;
      double* prow = probs + a.layout.group_base[gi] + (i - g.begin) * row_len;
      double mx = -std::numeric_limits<double>::infinity();
      bool any_open = false;
      std::size_t e = 0;
      for (const KeySpan& s : g.keys) {
        if (!s.tile && !query_ok) {
          for (std::size_t j = s.begin; j < s.end; ++j, ++e) computed[e] = 0;
          continue;
        }
        for (std::size_t j = s.begin; j < s.end; ++j, ++e) {
          const double* kj = k + (h * nk + j) * d;
          double dot = 0.0;
          for (std::size_t c = 0; c < d; ++c) dot += qi[c] * kj[c];
          local.macs += d;
          local.score_elements += 1;
          local.value_macs += dv;
          computed[e] = 1;
          double logit;
          if (entry_masked(p, i, j, query_ok)) {
            logit = kMaskedLogit;
          } else {
            logit = dot * a.scale;
            if (a.bias && a.bias->query_pos[i] >= 0 && a.bias->key_pos[j] >= 0) {
              const std::size_t nb = static_cast<std::size_t>(a.bias->spec->num_buckets);
              logit += table[h * nb + static_cast<std::size_t>(a.buckets->at(a.bias->key_pos[j] - a.bias->query_pos[i]))];
            }
            any_open = true;
          }
          logits[e] = logit;
          mx = std::max(mx, logit);
        }
      }
      double* orow = out + (h * nq + i) * dv;
      std::fill(orow, orow + dv, 0.0);
      if (!any_open) {
        std::fill(prow, prow + row_len, 0.0);
        continue;
      }
      double total = 0.0;
      for (std::size_t t = 0; t < row_len; ++t) {
        prow[t] = computed[t] ? std::exp(logits[t] - mx) : 0.0;
        total += prow[t];
      }
      const double inv = 1.0 / total;
      e = 0;
      for (const KeySpan& s : g.keys) {
        for (std::size_t j = s.begin; j < s.end; ++j, ++e) {
          prow[e] *= inv;
          const double w = prow[e];
          if (w == 0.0) continue;
          const double* vj = v + (h * nk + j) * dv;
          for (std::size_t c = 0; c < dv; ++c) orow[c] += w * vj[c];
        }
      }
    }
  }
  return local;
}

void backward_head(const KernelArgs& a, std::size_t h, const double* q, const double* k, const double* v,
                   const double* probs, const double* gout, double* gq, double* gk, double* gv, double* gtable) {
  const auto& p = a.pattern;
  const auto [heads, nq, nk, d, dv] = a.shape;
  (void)heads;
  std::vector<double> dp;
  for (std::size_t gi = 0; gi < p.groups.size(); ++gi) {
    const QueryGroup& g = p.groups[gi];
    const std::size_t row_len = a.layout.row_len[gi];
    dp.assign(row_len, 0.0);
    for (std::size_t i = g.begin; i < g.end; ++i) {
      const double* prow = probs + a.layout.group_base[gi] + (i - g.begin) * row_len;
      const double* go = gout + (h * nq + i) * dv;
      double weighted = 0.0;
      std::size_t e = 0;
      for (const KeySpan& s : g.keys) {
        for (std::size_t j = s.begin; j < s.end; ++j, ++e) {
          const double w = prow[e];
          if (w == 0.0) {
            dp[e] = 0.0;
            continue;
          }
          const double* vj = v + (h * nk + j) * dv;
          double acc = 0.0;
          for (std::size_t c = 0; c < dv; ++c) acc += go[c] * vj[c];
          dp[e] = acc;
          weighted += w * acc;
          if (gv) {
            double* gvj = gv + (h * nk + j) * dv;
            for (std::size_t c = 0; c < dv; ++c) gvj[c] += w * go[c];
          }
        }
      }
      const double* qi = q + (h * nq + i) * d;
      double* gqi = gq ? gq + (h * nq + i) * d : nullptr;
      e = 0;
      for (const KeySpan& s : g.keys) {
        for (std::size_t j = s.begin; j < s.end; ++j, ++e) {
          const double w = prow[e];
          if (w == 0.0) continue;
          const double ds = w * (dp[e] - weighted);
          const double* kj = k + (h * nk + j) * d;
          if (gqi)
            for (std::size_t c = 0; c < d; ++c) gqi[c] += ds * a.scale * kj[c];
          if (gk) {
            double* gkj = gk + (h * nk + j) * d;
            for (std::size_t c = 0; c < d; ++c) gkj[c] += ds * a.scale * qi[c];
          }
          if (gtable && a.bias->query_pos[i] >= 0 && a.bias->key_pos[j] >= 0) {
            const std::size_t nb = static_cast<std::size_t>(a.bias->spec->num_buckets);
            gtable[h * nb + static_cast<std::size_t>(a.buckets->at(a.bias->key_pos[j] - a.bias->query_pos[i]))] += ds;
          }
        }
      }
    }
  }
}

void check_pattern(const AttentionPattern& p, const KernelShape& s) {
  if (p.num_queries != s.nq || p.num_keys != s.nk) {
    throw DimensionError("attention pattern is " + std::to_string(p.num_queries) + "x" + std::to_string(p.num_keys) +
                         " but inputs are " + std::to_string(s.nq) + "x" + std::to_string(s.nk));
  }
  if (!p.query_valid.empty() && p.query_valid.size() != s.nq) throw DimensionError("query_valid length mismatch");
  if (!p.key_valid.empty() && p.key_valid.size() != s.nk) throw DimensionError("key_valid length mismatch");
  if (!p.allowed.empty() && p.allowed.size() != s.nq * s.nk) throw DimensionError("attention mask must be Lq x Lk");
  for (const QueryGroup& g : p.groups) {
    if (g.begin > g.end || g.end > s.nq) throw DimensionError("query group out of range");
    for (const KeySpan& span : g.keys)
      if (span.begin > span.end || span.end > s.nk) throw DimensionError("key span out of range");
  }
}

}  // namespace

AttentionCounters attention_counters() { return counters; }
void reset_attention_counters() { counters = {}; }

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionPattern& pattern,
              const RelativeBias* bias, std::vector<double>* weights) {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3 || q.dim(0) != k.dim(0) || k.dim(0) != v.dim(0) ||
      q.dim(2) != k.dim(2) || k.dim(1) != v.dim(1)) {
    throw DimensionError("attention shapes disagree: q " + to_string(q.shape()) + ", k " + to_string(k.shape()) +
                         ", v " + to_string(v.shape()));
  }
  const KernelShape shape{q.dim(0), q.dim(1), k.dim(1), q.dim(2), v.dim(2)};
  check_pattern(pattern, shape);
  std::vector<Tensor> inputs{q, k, v};
  BucketTable buckets;
  if (bias) {
    if (bias->query_pos.size() != shape.nq || bias->key_pos.size() != shape.nk) {
      throw DimensionError("relative bias positions do not match the attention pattern");
    }
    const Tensor& table = bias->spec->table;
    if (table.rank() != 2 || table.dim(0) != shape.heads ||
        table.dim(1) != static_cast<std::size_t>(bias->spec->num_buckets)) {
      throw DimensionError("relative bias table " + to_string(table.shape()) + " does not match " +
                           std::to_string(shape.heads) + " heads x " + std::to_string(bias->spec->num_buckets) +
                           " buckets");
    }
    buckets = make_bucket_table(*bias);
    inputs.push_back(table);
  }
  auto layout = std::make_shared<ProbLayout>(make_prob_layout(pattern));
  auto probs = std::make_shared<std::vector<double>>(layout->per_head * shape.heads);
  std::vector<double> out(shape.heads * shape.nq * shape.dv);
  const KernelArgs args{pattern, *layout, shape, 1.0 / std::sqrt(static_cast<double>(shape.d)), bias, &buckets};
  const double* table_ptr = bias ? bias->spec->table.data().data() : nullptr;

  AttentionCounters total;
  const auto heads = static_cast<std::ptrdiff_t>(shape.heads);
  if (kernels::backend() == kernels::Backend::OpenMP && heads > 1) {
    std::vector<AttentionCounters> per_head(shape.heads);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t h = 0; h < heads; ++h) {
      const auto hh = static_cast<std::size_t>(h);
      per_head[hh] = forward_head(args, hh, q.data().data(), k.data().data(), v.data().data(), table_ptr,
                                  probs->data() + hh * layout->per_head, out.data());
    }
    for (const auto& c : per_head) {
      total.macs += c.macs;
      total.score_elements += c.score_elements;
      total.value_macs += c.value_macs;
    }
  } else {
    for (std::size_t h = 0; h < shape.heads; ++h) {
      const auto c = forward_head(args, h, q.data().data(), k.data().data(), v.data().data(), table_ptr,
                                  probs->data() + h * layout->per_head, out.data());
      total.macs += c.macs;
      total.score_elements += c.score_elements;
      total.value_macs += c.value_macs;
    }
  }
  counters.macs += total.macs;
  counters.score_elements += total.score_elements;
  counters.value_macs += total.value_macs;

  if (weights) {
    weights->assign(shape.heads * shape.nq * shape.nk, 0.0);
    for (std::size_t h = 0; h < shape.heads; ++h) {
      for (std::size_t gi = 0; gi < pattern.groups.size(); ++gi) {
        const QueryGroup& g = pattern.groups[gi];
        for (std::size_t i = g.begin; i < g.end; ++i) {
          std::size_t e = h * layout->per_head + layout->group_base[gi] + (i - g.begin) * layout->row_len[gi];
          for (const KeySpan& s : g.keys)
            for (std::size_t j = s.begin; j < s.end; ++j, ++e) (*weights)[(h * shape.nq + i) * shape.nk + j] += (*probs)[e];
        }
      }
    }
  }

  // The backward rule keeps its own copies of the pattern metadata so the
  // caller's pattern may go out of scope.
  auto saved_pattern = std::make_shared<AttentionPattern>(pattern);
  std::shared_ptr<BiasSpec> saved_spec;
  std::shared_ptr<RelativeBias> saved_bias;
  if (bias) {
    saved_spec = std::make_shared<BiasSpec>(*bias->spec);
    saved_bias = std::make_shared<RelativeBias>(*bias);
    saved_bias->spec = saved_spec.get();
  }
  auto saved_buckets = std::make_shared<BucketTable>(std::move(buckets));
  return record({shape.heads, shape.nq, shape.dv}, std::move(out), inputs,
                [q, k, v, shape, layout, probs, saved_pattern, saved_spec, saved_bias, saved_buckets](std::span<const double> g,
                                                                                         BackwardContext& ctx) {
                  auto gq = ctx.grad(0);
                  auto gk = ctx.grad(1);
                  auto gv = ctx.grad(2);
                  std::span<double> gt;
                  if (saved_bias) gt = ctx.grad(3);
                  const KernelArgs args{*saved_pattern, *layout, shape, 1.0 / std::sqrt(static_cast<double>(shape.d)),
                                        saved_bias.get(), saved_buckets.get()};
                  auto ptr = [](std::span<double> s) { return s.empty() ? nullptr : s.data(); };
                  const auto heads = static_cast<std::ptrdiff_t>(shape.heads);
                  if (kernels::backend() == kernels::Backend::OpenMP && heads > 1) {
#pragma omp parallel for schedule(static)
                    for (std::ptrdiff_t h = 0; h < heads; ++h) {
                      const auto hh = static_cast<std::size_t>(h);
                      backward_head(args, hh, q.data().data(), k.data().data(), v.data().data(),
                                    probs->data() + hh * layout->per_head, g.data(), ptr(gq), ptr(gk), ptr(gv), ptr(gt));
                    }
                  } else {
                    for (std::size_t h = 0; h < shape.heads; ++h) {
                      backward_head(args, h, q.data().data(), k.data().data(), v.data().data(),
                                    probs->data() + h * layout->per_head, g.data(), ptr(gq), ptr(gk), ptr(gv), ptr(gt));
                    }
                  }
                });
}

namespace {

std::vector<std::int64_t> iota_positions(std::size_t n) {
  std::vector<std::int64_t> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[i] = static_cast<std::int64_t>(i);
  return pos;
}

std::vector<std::int64_t> frame_positions(const BlockLayout& layout) {
  std::vector<std::int64_t> pos(layout.frame_len(), -1);
  for (std::size_t i = 0; i < layout.seq_len; ++i) pos[layout.pad_left + i] = static_cast<std::int64_t>(i);
  return pos;
}

std::vector<std::uint8_t> frame_validity(const BlockLayout& layout) {
  std::vector<std::uint8_t> valid(layout.frame_len(), 0);
  for (std::size_t i = 0; i < layout.seq_len; ++i) valid[layout.pad_left + i] = 1;
  return valid;
}

void check_layout(const BlockLayout& layout, std::size_t len) {
  if (layout.seq_len != len) {
    throw DimensionError("block layout covers " + std::to_string(layout.seq_len) + " positions but the sequence has " +
                         std::to_string(len));
  }
}

}  // namespace

AttentionPattern block_local_pattern(const BlockLayout& layout) {
  const std::size_t b = layout.block_size, frame = layout.frame_len();
  AttentionPattern pattern;
  pattern.num_queries = pattern.num_keys = frame;
  for (std::size_t blk = 0; blk < layout.num_blocks(); ++blk) {
    pattern.groups.push_back({blk * b, (blk + 1) * b, {{blk * b, (blk + 1) * b, true}}});
  }
  pattern.query_valid = frame_validity(layout);
  pattern.key_valid = pattern.query_valid;
  return pattern;
}

AttentionPattern global_local_pattern(const BlockLayout& layout, std::size_t g) {
  if (g == 0) throw DimensionError("global_local attention needs at least one global token");
  const std::size_t b = layout.block_size, frame = layout.frame_len();
  const std::size_t real_begin = layout.pad_left, real_end = layout.pad_left + layout.seq_len;
  AttentionPattern pattern;
  pattern.num_queries = pattern.num_keys = frame + g;
  for (std::size_t blk = 0; blk < layout.num_blocks(); ++blk) {
    pattern.groups.push_back({blk * b, (blk + 1) * b, {{blk * b, (blk + 1) * b, true}, {frame, frame + g, false}}});
  }
  pattern.groups.push_back({frame, frame + g, {{real_begin, real_end, false}, {frame, frame + g, false}}});
  pattern.query_valid = frame_validity(layout);
  pattern.query_valid.resize(frame + g, 1);
  pattern.key_valid = pattern.query_valid;
  return pattern;
}

MaskMatrix pattern_mask(const AttentionPattern& p) {
  MaskMatrix m{p.num_queries, p.num_keys, std::vector<std::uint8_t>(p.num_queries * p.num_keys, 0)};
  for (const QueryGroup& g : p.groups) {
    for (std::size_t i = g.begin; i < g.end; ++i) {
      const bool query_ok = p.query_valid.empty() || p.query_valid[i];
      for (const KeySpan& s : g.keys)
        for (std::size_t j = s.begin; j < s.end; ++j)
          if (!entry_masked(p, i, j, query_ok)) m.allowed[i * m.cols + j] = 1;
    }
  }
  return m;
}

MaskMatrix encoder_mask(const AttentionSpec& spec, std::size_t seq_len, std::size_t layer_index) {
  spec.validate();
  if (spec.variant == AttentionVariant::Full) {
    return {seq_len, seq_len, std::vector<std::uint8_t>(seq_len * seq_len, 1)};
  }
  const BlockLayout layout = make_block_layout(seq_len, spec.block_size, layer_index, spec.staggered);
  const std::size_t g = spec.variant == AttentionVariant::GlobalLocal ? spec.num_global : 0;
  const AttentionPattern pattern = g ? global_local_pattern(layout, g) : block_local_pattern(layout);
  const MaskMatrix frame_mask = pattern_mask(pattern);
  // frame index -> real index (tokens then globals); pads dropped
  const std::size_t frame = layout.frame_len(), n = seq_len + g;
  auto real_of = [&](std::size_t slot) -> std::ptrdiff_t {
    if (slot >= frame) return static_cast<std::ptrdiff_t>(seq_len + slot - frame);
    if (layout.is_pad_slot(slot)) return -1;
    return static_cast<std::ptrdiff_t>(slot - layout.pad_left);
  };
  MaskMatrix m{n, n, std::vector<std::uint8_t>(n * n, 0)};
  for (std::size_t i = 0; i < frame_mask.rows; ++i) {
    const auto ri = real_of(i);
    if (ri < 0) continue;
    for (std::size_t j = 0; j < frame_mask.cols; ++j) {
      const auto rj = real_of(j);
      if (rj >= 0 && frame_mask.at(i, j)) m.allowed[static_cast<std::size_t>(ri) * n + static_cast<std::size_t>(rj)] = 1;
    }
  }
  return m;
}

Tensor full_attention(const Tensor& q, const Tensor& k, const Tensor& v, const std::vector<std::uint8_t>* mask,
                      const BiasSpec* bias) {
  auto pattern = AttentionPattern::dense(q.dim(1), k.dim(1));
  if (mask) pattern.allowed = *mask;
  if (!bias) return attend(q, k, v, pattern);
  RelativeBias rb{bias, iota_positions(q.dim(1)), iota_positions(k.dim(1))};
  return attend(q, k, v, pattern, &rb);
}

Tensor block_local_attention(const Tensor& q, const Tensor& k, const Tensor& v, const BlockLayout& layout,
                             const BiasSpec* bias) {
  check_layout(layout, q.dim(1));
  check_layout(layout, k.dim(1));
  const AttentionPattern pattern = block_local_pattern(layout);
  const Tensor qf = pad_rows(q, layout.pad_left, layout.pad_right);
  const Tensor kf = pad_rows(k, layout.pad_left, layout.pad_right);
  const Tensor vf = pad_rows(v, layout.pad_left, layout.pad_right);
  Tensor out;
  if (bias) {
    RelativeBias rb{bias, frame_positions(layout), frame_positions(layout)};
    out = attend(qf, kf, vf, pattern, &rb);
  } else {
    out = attend(qf, kf, vf, pattern);
  }
  if (layout.pad_left == 0 && layout.pad_right == 0) return out;
  return slice_rows(out, layout.pad_left, layout.pad_left + layout.seq_len);
}

std::pair<Tensor, Tensor> global_local_core(const Tensor& q_tok, const Tensor& k_tok, const Tensor& v_tok,
                                            const Tensor& q_glob, const Tensor& k_glob, const Tensor& v_glob,
                                            const BlockLayout& layout, const BiasSpec* bias) {
  check_layout(layout, q_tok.dim(1));
  const std::size_t g = q_glob.dim(1);
  if (g == 0) throw DimensionError("global_local attention needs at least one global token");
  const std::size_t frame = layout.frame_len();
  const std::size_t real_begin = layout.pad_left, real_end = layout.pad_left + layout.seq_len;
  const AttentionPattern pattern = global_local_pattern(layout, g);

  const Tensor q = concat_rows(pad_rows(q_tok, layout.pad_left, layout.pad_right), q_glob);
  const Tensor k = concat_rows(pad_rows(k_tok, layout.pad_left, layout.pad_right), k_glob);
  const Tensor v = concat_rows(pad_rows(v_tok, layout.pad_left, layout.pad_right), v_glob);
  Tensor out;
  if (bias) {
    auto pos = frame_positions(layout);
    pos.resize(frame + g, -1);
    RelativeBias rb{bias, pos, pos};
    out = attend(q, k, v, pattern, &rb);
  } else {
    out = attend(q, k, v, pattern);
  }
  return {slice_rows(out, real_begin, real_end), slice_rows(out, frame, frame + g)};
}

Tensor causal_self_attention(const Tensor& q, const Tensor& k, const Tensor& v, const BiasSpec* bias) {
  if (q.dim(1) != k.dim(1)) throw DimensionError("causal self-attention needs equal query and key lengths");
  auto pattern = AttentionPattern::dense(q.dim(1), k.dim(1));
  pattern.causal = true;
  if (!bias) return attend(q, k, v, pattern);
  RelativeBias rb{bias, iota_positions(q.dim(1)), iota_positions(k.dim(1))};
  return attend(q, k, v, pattern, &rb);
}

Tensor cross_attention(const Tensor& dec_q, const Tensor& enc_k, const Tensor& enc_v) {
  return attend(dec_q, enc_k, enc_v, AttentionPattern::dense(dec_q.dim(1), enc_k.dim(1)));
}

Tensor project_heads(const Tensor& x, const Tensor& w, std::size_t heads) { return split_heads(matmul(x, w), heads); }

Tensor combine_heads(const Tensor& heads_out, const Tensor& wo) { return matmul(merge_heads(heads_out), wo); }

std::pair<Tensor, Tensor> global_local_attention(const Tensor& tokens, const Tensor& globals, const BlockLayout& layout,
                                                 const ProjectionWeights& w, std::size_t heads,
                                                 const PositionHooks& hooks) {
  if (globals.rank() != 2 || globals.dim(0) == 0) throw DimensionError("global_local attention needs g >= 1 globals");
  if (tokens.rank() != 2 || tokens.dim(0) == 0) throw DimensionError("global_local attention needs L >= 1 tokens");
  Tensor qt = project_heads(tokens, w.wq, heads);
  Tensor kt = project_heads(tokens, w.wk, heads);
  const Tensor vt = project_heads(tokens, w.wv, heads);
  const Tensor qg = project_heads(globals, w.wq, heads);
  const Tensor kg = project_heads(globals, w.wk, heads);
  const Tensor vg = project_heads(globals, w.wv, heads);
  if (hooks.rope_factor) {
    std::vector<std::int64_t> pos(tokens.dim(0));
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<std::int64_t>(i);
    qt = rope_apply(qt, pos, *hooks.rope_factor);
    kt = rope_apply(kt, pos, *hooks.rope_factor);
  }
  auto [ot, og] = global_local_core(qt, kt, vt, qg, kg, vg, layout, hooks.bias);
  return {combine_heads(ot, w.wo), combine_heads(og, w.wo)};
}

AttentionCost attention_cost(const AttentionSpec& spec, std::size_t seq_len, std::size_t layer_index) {
  const std::uint64_t h = spec.num_heads, d = spec.head_dim, L = seq_len;
  std::uint64_t per_head = 0;
  if (spec.variant == AttentionVariant::Full) {
    per_head = L * L;
  } else {
    const auto layout = make_block_layout(seq_len, spec.block_size, layer_index, spec.staggered);
    per_head = static_cast<std::uint64_t>(layout.frame_len()) * spec.block_size;
    if (spec.variant == AttentionVariant::GlobalLocal) {
      const std::uint64_t g = spec.num_global;
      per_head += L * g + g * (L + g);
    }
  }
  return {h * per_head * d, h * per_head};
}

AttentionCost attention_cost(const AttentionSpec& spec, std::size_t seq_len) {
  return attention_cost(spec, seq_len, spec.staggered ? 1 : 0);
}

}  // namespace longattn
