#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "longattn/tensor.hpp"

namespace longattn {

enum class AttentionVariant { Full, BlockLocal, GlobalLocal };

std::string to_string(AttentionVariant variant);
AttentionVariant parse_attention_variant(const std::string& name);

struct AttentionSpec {
  AttentionVariant variant = AttentionVariant::Full;
  std::size_t block_size = 64;
  std::size_t num_global = 0;
  bool staggered = false;
  std::size_t num_heads = 1;
  std::size_t head_dim = 1;

  void validate() const;
  bool operator==(const AttentionSpec&) const = default;
};

/// Assignment of positions to blocks for one encoder layer. The frame is
/// the sequence with `pad_left` masked slots in front and `pad_right`
/// behind, cut into frame_len() / block_size contiguous blocks.
struct BlockLayout {
  std::size_t seq_len = 0;
  std::size_t block_size = 0;
  std::size_t offset = 0;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
  std::vector<std::size_t> block_index;  // per real position

  std::size_t frame_len() const { return pad_left + seq_len + pad_right; }
  std::size_t num_blocks() const { return frame_len() / block_size; }
  bool is_pad_slot(std::size_t slot) const { return slot < pad_left || slot >= pad_left + seq_len; }
};

/// Odd layers of a staggered stack shift block boundaries by half a block:
/// the sequence is padded by b/2 on the left (and up to a block multiple on
/// the right) and the pad slots are masked.
BlockLayout make_block_layout(std::size_t seq_len, std::size_t block_size, std::size_t layer_index, bool staggered);

// ---------------------------------------------------------------------------
// Structured attention kernel

/// A contiguous run of key indices. Tile spans are computed for every query
/// row of the group (masked where invalid), the way a blocked implementation
/// computes whole b x b tiles; non-tile spans are skipped for invalid rows.
struct KeySpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool tile = true;
};

/// Query rows [begin, end) sharing one set of key spans. Each row gets a
/// single softmax over the union of its spans.
struct QueryGroup {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::vector<KeySpan> keys;
};

struct AttentionPattern {
  std::size_t num_queries = 0;
  std::size_t num_keys = 0;
  std::vector<QueryGroup> groups;
  std::vector<std::uint8_t> query_valid;  // empty: all valid
  std::vector<std::uint8_t> key_valid;    // empty: all valid
  bool causal = false;                    // key j allowed only when j <= query i
  std::vector<std::uint8_t> allowed;      // optional dense [num_queries * num_keys]

  static AttentionPattern dense(std::size_t num_queries, std::size_t num_keys);
  /// Score entries computed per head (counted by the instrumented kernel).
  std::size_t score_elements() const;
};

/// Patterns in frame coordinates: slots [0, frame_len) then globals.
AttentionPattern block_local_pattern(const BlockLayout& layout);
AttentionPattern global_local_pattern(const BlockLayout& layout, std::size_t num_global);

/// Dense boolean permission matrix (row = query, col = key).
struct MaskMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> allowed;
  bool at(std::size_t i, std::size_t j) const { return allowed[i * cols + j] != 0; }
};

/// Which (query, key) pairs receive non-masked logits under `pattern`.
MaskMatrix pattern_mask(const AttentionPattern& pattern);

/// Encoder self-attention mask of one layer in real coordinates: tokens
/// 0..L-1 followed by the globals (GlobalLocal only).
MaskMatrix encoder_mask(const AttentionSpec& spec, std::size_t seq_len, std::size_t layer_index);

/// Relative-position logit bias looked up from a [heads, num_buckets] table.
struct BiasSpec {
  Tensor table;
  int num_buckets = 32;
  int max_distance = 128;
  bool bidirectional = true;
};

/// Positions for a pattern's query and key indices; -1 means "no position"
/// (pad slots, global tokens), which receive no bias.
struct RelativeBias {
  const BiasSpec* spec = nullptr;
  std::vector<std::int64_t> query_pos;
  std::vector<std::int64_t> key_pos;
};

/// Multiply-accumulates spent on q.k scores, score entries computed and
/// multiply-accumulates of the probability-weighted value sum, accumulated
/// by every attend() call on this thread.
struct AttentionCounters {
  std::uint64_t macs = 0;
  std::uint64_t score_elements = 0;
  std::uint64_t value_macs = 0;
};
AttentionCounters attention_counters();
void reset_attention_counters();

constexpr double kMaskedLogit = -1e9;

/// softmax(q k^T / sqrt(d) + bias, masked -> -1e9) v over the pattern, with
/// rows that have no permitted key zeroed. q [h, Nq, d], k [h, Nk, d],
/// v [h, Nk, dv]. When `weights` is given it receives the dense [h, Nq, Nk]
/// attention probabilities.
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionPattern& pattern,
              const RelativeBias* bias = nullptr, std::vector<double>* weights = nullptr);

// ---------------------------------------------------------------------------
// Attention variants over head-split tensors [h, L, d]

/// Dense attention; `mask` is an optional [Lq * Lk] permission matrix shared
/// by all heads. A bias spec applies positions 0..Lq-1 / 0..Lk-1.
Tensor full_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                      const std::vector<std::uint8_t>* mask = nullptr, const BiasSpec* bias = nullptr);

/// Attention restricted to the blocks of `layout`; pads neither attend nor
/// are attended.
Tensor block_local_attention(const Tensor& q, const Tensor& k, const Tensor& v, const BlockLayout& layout,
                             const BiasSpec* bias = nullptr);

/// Token rows attend to their block plus every global; global rows attend to
/// every token and every global. Returns {tokens [h, L, d], globals [h, g, d]}.
std::pair<Tensor, Tensor> global_local_core(const Tensor& q_tok, const Tensor& k_tok, const Tensor& v_tok,
                                            const Tensor& q_glob, const Tensor& k_glob, const Tensor& v_glob,
                                            const BlockLayout& layout, const BiasSpec* bias = nullptr);

/// Strictly causal self-attention (key j visible to query i iff j <= i).
Tensor causal_self_attention(const Tensor& q, const Tensor& k, const Tensor& v, const BiasSpec* bias = nullptr);

/// Unmasked decoder-to-encoder attention.
Tensor cross_attention(const Tensor& dec_q, const Tensor& enc_k, const Tensor& enc_v);

// ---------------------------------------------------------------------------
// Projected (model-width) forms

struct ProjectionWeights {
  Tensor wq, wk, wv, wo;  // [d_model, d_model]
};

/// Encoding hooks applied inside a sublayer: RoPE rotation of token queries
/// and keys, and/or a relative bias.
struct PositionHooks {
  std::optional<double> rope_factor;
  const BiasSpec* bias = nullptr;
};

/// [L, dm] x W -> [h, L, dm / h]
Tensor project_heads(const Tensor& x, const Tensor& w, std::size_t heads);
/// [h, L, d] -> [L, h*d] x Wo
Tensor combine_heads(const Tensor& heads_out, const Tensor& wo);

/// Global-local sublayer on normalized inputs (tokens [L, dm], globals
/// [g, dm]) sharing one set of projections. Returns projected outputs for
/// both streams.
std::pair<Tensor, Tensor> global_local_attention(const Tensor& tokens, const Tensor& globals, const BlockLayout& layout,
                                                 const ProjectionWeights& w, std::size_t heads,
                                                 const PositionHooks& hooks = {});

// ---------------------------------------------------------------------------
// Cost model

struct AttentionCost {
  std::uint64_t flops = 0;            // q.k multiply-accumulates
  std::uint64_t score_mem_elems = 0;  // score entries, all heads
};

/// Closed-form cost of one attention layer over L tokens. For staggered
/// specs this is the shifted (padded) layer, the more expensive parity.
AttentionCost attention_cost(const AttentionSpec& spec, std::size_t seq_len);
AttentionCost attention_cost(const AttentionSpec& spec, std::size_t seq_len, std::size_t layer_index);

}  // namespace longattn
