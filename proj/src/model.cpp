#include "longattn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "longattn/ops.hpp"

namespace longattn {

void ModelConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
  if (d_model == 0 || num_heads == 0 || d_ff == 0) throw ConfigError("d_model, num_heads and d_ff must be positive");
  if (d_model % num_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by num_heads " +
                      std::to_string(num_heads));
  }
  if (enc_layers == 0 || dec_layers == 0) throw ConfigError("enc_layers and dec_layers must be >= 1");
  if (max_input_len == 0 || max_output_len == 0) throw ConfigError("max_input_len and max_output_len must be >= 1");
  if (cross_attn_layers.empty()) throw ConfigError("cross_attn_layers must not be empty");
  for (std::size_t i = 0; i < cross_attn_layers.size(); ++i) {
    if (cross_attn_layers[i] >= dec_layers) {
      throw ConfigError("cross_attn_layers entry " + std::to_string(cross_attn_layers[i]) + " is outside [0, " +
                        std::to_string(dec_layers) + ")");
    }
    if (i > 0 && cross_attn_layers[i] <= cross_attn_layers[i - 1]) {
      throw ConfigError("cross_attn_layers must be strictly increasing");
    }
  }
  if (decoder_global_attn && attention.variant != AttentionVariant::GlobalLocal) {
    throw ConfigError("decoder_global_attn requires the global_local encoder");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must be in [0, 1)");
  attention_spec().validate();
  posenc.validate();
  if (posenc.scheme == PosScheme::Sinusoidal && d_model % 2 != 0) throw ConfigError("sinusoidal encoding needs even d_model");
  if (posenc.scheme == PosScheme::RoPE && head_dim() % 2 != 0) throw ConfigError("rope needs an even head dimension");
  for (auto [name, id] : {std::pair{"mask_id", mask_id}, {"pad_id", pad_id}, {"eos_id", eos_id}, {"bos_id", bos_id}}) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
      throw ConfigError(std::string(name) + " " + std::to_string(id) + " is outside the vocabulary");
    }
  }
}

AttentionSpec ModelConfig::attention_spec() const {
  AttentionSpec spec = attention;
  spec.num_heads = num_heads;
  spec.head_dim = num_heads ? d_model / num_heads : 0;
  return spec;
}

bool ModelConfig::has_cross_attention(std::size_t dec_layer) const {
  return std::find(cross_attn_layers.begin(), cross_attn_layers.end(), dec_layer) != cross_attn_layers.end();
}

// ---------------------------------------------------------------------------

void ParamStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw CheckpointError("missing parameter " + name);
  return entries_[it->second].second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw CheckpointError("missing parameter " + name);
  return entries_[it->second].second;
}

void ParamStore::set(const std::string& name, Tensor value) {
  if (!contains(name)) {
    add(name, std::move(value));
    return;
  }
  at(name) = std::move(value);
}

void ParamStore::erase(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) return;
  entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(it->second));
  index_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i].first, i);
}

std::size_t ParamStore::num_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

// ---------------------------------------------------------------------------

namespace {

void push_norm(std::vector<std::pair<std::string, Shape>>& out, const std::string& name, std::size_t d) {
  out.push_back({name + ".gain", {d}});
  out.push_back({name + ".bias", {d}});
}

void push_attn(std::vector<std::pair<std::string, Shape>>& out, const std::string& name, std::size_t d) {
  for (const char* m : {"wq", "wk", "wv", "wo"}) out.push_back({name + "." + m, {d, d}});
}

void push_ffn(std::vector<std::pair<std::string, Shape>>& out, const std::string& name, std::size_t d, std::size_t f) {
  out.push_back({name + ".w_in", {d, f}});
  out.push_back({name + ".b_in", {f}});
  out.push_back({name + ".w_out", {f, d}});
  out.push_back({name + ".b_out", {d}});
}

std::size_t encoder_table_len(const ModelConfig& cfg) {
  return cfg.posenc.learned_max_len ? cfg.posenc.learned_max_len : cfg.max_input_len;
}

}  // namespace

std::vector<std::pair<std::string, Shape>> param_shapes(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  const bool global = cfg.attention.variant == AttentionVariant::GlobalLocal;
  std::vector<std::pair<std::string, Shape>> out;
  out.push_back({"embed.tokens", {cfg.vocab_size, d}});
  if (cfg.posenc.scheme == PosScheme::LearnedAbsolute) {
    out.push_back({"encoder.positions", {encoder_table_len(cfg), d}});
    out.push_back({"decoder.positions", {cfg.max_output_len, d}});
  }
  if (global) out.push_back({"encoder.globals", {cfg.attention.num_global, d}});
  if (cfg.posenc.scheme == PosScheme::T5Relative) {
    const auto nb = static_cast<std::size_t>(cfg.posenc.t5_num_buckets);
    out.push_back({"encoder.rel_bias", {cfg.num_heads, nb}});
    out.push_back({"decoder.rel_bias", {cfg.num_heads, nb}});
  }
  for (std::size_t i = 0; i < cfg.enc_layers; ++i) {
    const std::string p = "encoder.layer" + std::to_string(i);
    push_norm(out, p + ".attn_norm", d);
    push_attn(out, p + ".attn", d);
    if (global) push_norm(out, p + ".global_norm", d);
    push_norm(out, p + ".ffn_norm", d);
    push_ffn(out, p + ".ffn", d, cfg.d_ff);
  }
  push_norm(out, "encoder.final_norm", d);
  for (std::size_t i = 0; i < cfg.dec_layers; ++i) {
    const std::string p = "decoder.layer" + std::to_string(i);
    push_norm(out, p + ".self_norm", d);
    push_attn(out, p + ".self_attn", d);
    if (cfg.has_cross_attention(i)) {
      if (cfg.decoder_global_attn) {
        push_norm(out, p + ".global_cross_norm", d);
        push_attn(out, p + ".global_cross_attn", d);
      }
      push_norm(out, p + ".cross_norm", d);
      push_attn(out, p + ".cross_attn", d);
    }
    push_norm(out, p + ".ffn_norm", d);
    push_ffn(out, p + ".ffn", d, cfg.d_ff);
  }
  push_norm(out, "decoder.final_norm", d);
  if (!cfg.tie_embeddings) out.push_back({"lm_head", {d, cfg.vocab_size}});
  return out;
}

std::size_t count_params(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const auto& [name, shape] : param_shapes(cfg)) n += numel(shape);
  return n;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  ParamStore params;
  for (auto& [name, shape] : param_shapes(cfg)) {
    std::vector<double> data(numel(shape), 0.0);
    if (ends_with(name, ".gain")) {
      std::fill(data.begin(), data.end(), 1.0);
    } else if (ends_with(name, ".bias") || ends_with(name, ".b_in") || ends_with(name, ".b_out")) {
      // zeros
    } else {
      const bool dense = ends_with(name, ".wq") || ends_with(name, ".wk") || ends_with(name, ".wv") ||
                         ends_with(name, ".wo") || ends_with(name, ".w_in") || ends_with(name, ".w_out");
      double stddev = 0.02;
      if (name == "embed.tokens") stddev = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
      if (dense) stddev = 1.0 / std::sqrt(static_cast<double>(shape[0]));
      for (double& v : data) v = rng.truncated_normal(stddev);
    }
    params.add(name, Tensor(shape, std::move(data), true));
  }
  return params;
}

void check_params(const ModelConfig& cfg, const ParamStore& params) {
  const auto expected = param_shapes(cfg);
  for (const auto& [name, shape] : expected) {
    if (!params.contains(name)) throw CheckpointError("checkpoint lacks parameter " + name);
    if (params.at(name).shape() != shape) {
      throw CheckpointError("parameter " + name + " has shape " + to_string(params.at(name).shape()) + ", config expects " +
                            to_string(shape));
    }
  }
  if (params.size() != expected.size()) {
    for (const auto& [name, t] : params) {
      const bool known = std::any_of(expected.begin(), expected.end(), [&](const auto& e) { return e.first == name; });
      if (!known) throw CheckpointError("unexpected parameter " + name + " for this config");
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::int64_t> positions(std::size_t n) {
  std::vector<std::int64_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  return p;
}

Tensor norm(const ParamStore& params, const std::string& name, const Tensor& x) {
  return layer_norm(x, params.at(name + ".gain"), params.at(name + ".bias"));
}

ProjectionWeights projections(const ParamStore& params, const std::string& name) {
  return {params.at(name + ".wq"), params.at(name + ".wk"), params.at(name + ".wv"), params.at(name + ".wo")};
}

Tensor feed_forward(const ParamStore& params, const std::string& name, const Tensor& x) {
  const Tensor h = gelu(add(matmul(x, params.at(name + ".w_in")), params.at(name + ".b_in")));
  return add(matmul(h, params.at(name + ".w_out")), params.at(name + ".b_out"));
}

struct Context {
  const ModelConfig& cfg;
  const ParamStore& params;
  const ForwardOptions& opts;

  Tensor drop(const Tensor& x) const {
    if (!opts.training || cfg.dropout_p == 0.0) return x;
    if (!opts.rng) throw ConfigError("dropout during training needs an rng");
    return dropout(x, cfg.dropout_p, true, *opts.rng);
  }
  std::optional<double> rope() const {
    if (cfg.posenc.scheme != PosScheme::RoPE) return std::nullopt;
    return cfg.posenc.sinusoidal_factor;
  }
};

void check_ids(const ModelConfig& cfg, std::span<const std::int64_t> ids, std::size_t max_len, const char* what) {
  if (ids.empty()) throw DimensionError(std::string(what) + " is empty");
  if (ids.size() > max_len) {
    throw DimensionError(std::string(what) + " length " + std::to_string(ids.size()) + " exceeds the maximum of " +
                         std::to_string(max_len));
  }
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
      throw DimensionError(std::string(what) + " contains id " + std::to_string(id) + " outside the vocabulary");
    }
  }
}

Tensor embed(const Context& c, std::span<const std::int64_t> ids, const char* table) {
  const std::size_t d = c.cfg.d_model;
  Tensor x = scale(embedding_lookup(c.params.at("embed.tokens"), ids), std::sqrt(static_cast<double>(d)));
  switch (c.cfg.posenc.scheme) {
    case PosScheme::Sinusoidal: x = add(x, sinusoidal(ids.size(), d, c.cfg.posenc.sinusoidal_factor)); break;
    case PosScheme::LearnedAbsolute: x = add(x, learned_absolute(c.params.at(table), ids.size())); break;
    default: break;
  }
  return c.drop(x);
}

BiasSpec bias_spec(const Context& c, const char* name, bool bidirectional) {
  return {c.params.at(name), c.cfg.posenc.t5_num_buckets, c.cfg.posenc.t5_max_distance, bidirectional};
}

}  // namespace

EncoderOutput encoder_forward(const ModelConfig& cfg, const ParamStore& params, std::span<const std::int64_t> ids,
                              const ForwardOptions& opts) {
  check_ids(cfg, ids, cfg.max_input_len, "encoder input");
  const Context c{cfg, params, opts};
  const std::size_t heads = cfg.num_heads, len = ids.size();
  const AttentionVariant variant = cfg.attention.variant;
  const bool global = variant == AttentionVariant::GlobalLocal;
  std::optional<BiasSpec> bias;
  if (cfg.posenc.scheme == PosScheme::T5Relative) bias = bias_spec(c, "encoder.rel_bias", true);
  const auto rope = c.rope();
  const auto pos = positions(len);

  Tensor x = embed(c, ids, "encoder.positions");
  Tensor gl;
  if (global) gl = params.at("encoder.globals");
  for (std::size_t i = 0; i < cfg.enc_layers; ++i) {
    const std::string p = "encoder.layer" + std::to_string(i);
    const ProjectionWeights w = projections(params, p + ".attn");
    const Tensor nx = norm(params, p + ".attn_norm", x);
    if (global) {
      const BlockLayout layout = make_block_layout(len, cfg.attention.block_size, i, cfg.attention.staggered);
      const Tensor ng = norm(params, p + ".global_norm", gl);
      PositionHooks hooks{rope, bias ? &*bias : nullptr};
      auto [at, ag] = global_local_attention(nx, ng, layout, w, heads, hooks);
      x = add(x, c.drop(at));
      gl = add(gl, c.drop(ag));
    } else {
      Tensor q = project_heads(nx, w.wq, heads);
      Tensor k = project_heads(nx, w.wk, heads);
      const Tensor v = project_heads(nx, w.wv, heads);
      if (rope) {
        q = rope_apply(q, pos, *rope);
        k = rope_apply(k, pos, *rope);
      }
      Tensor o;
      if (variant == AttentionVariant::Full) {
        o = full_attention(q, k, v, nullptr, bias ? &*bias : nullptr);
      } else {
        const BlockLayout layout = make_block_layout(len, cfg.attention.block_size, i, cfg.attention.staggered);
        o = block_local_attention(q, k, v, layout, bias ? &*bias : nullptr);
      }
      x = add(x, c.drop(combine_heads(o, w.wo)));
    }
    x = add(x, c.drop(feed_forward(params, p + ".ffn", norm(params, p + ".ffn_norm", x))));
    if (global) gl = add(gl, c.drop(feed_forward(params, p + ".ffn", norm(params, p + ".ffn_norm", gl))));
  }
  EncoderOutput out;
  out.tokens = norm(params, "encoder.final_norm", x);
  if (global) out.globals = norm(params, "encoder.final_norm", gl);
  return out;
}

Tensor decoder_forward(const ModelConfig& cfg, const ParamStore& params, std::span<const std::int64_t> out_ids,
                       const EncoderOutput& enc, const ForwardOptions& opts) {
  check_ids(cfg, out_ids, cfg.max_output_len, "decoder input");
  if (!enc.tokens.defined()) throw ConfigError("decoder needs encoder token states");
  if (cfg.decoder_global_attn && !enc.globals.defined()) {
    throw ConfigError("decoder global cross-attention needs encoder global states");
  }
  const Context c{cfg, params, opts};
  const std::size_t heads = cfg.num_heads;
  std::optional<BiasSpec> bias;
  if (cfg.posenc.scheme == PosScheme::T5Relative) bias = bias_spec(c, "decoder.rel_bias", false);
  const auto rope = c.rope();
  const auto dec_pos = positions(out_ids.size());
  const auto enc_pos = positions(enc.tokens.dim(0));

  Tensor x = embed(c, out_ids, "decoder.positions");
  for (std::size_t i = 0; i < cfg.dec_layers; ++i) {
    const std::string p = "decoder.layer" + std::to_string(i);
    {
      const ProjectionWeights w = projections(params, p + ".self_attn");
      const Tensor nx = norm(params, p + ".self_norm", x);
      Tensor q = project_heads(nx, w.wq, heads);
      Tensor k = project_heads(nx, w.wk, heads);
      const Tensor v = project_heads(nx, w.wv, heads);
      if (rope) {
        q = rope_apply(q, dec_pos, *rope);
        k = rope_apply(k, dec_pos, *rope);
      }
      x = add(x, c.drop(combine_heads(causal_self_attention(q, k, v, bias ? &*bias : nullptr), w.wo)));
    }
    if (cfg.has_cross_attention(i)) {
      if (cfg.decoder_global_attn) {
        const ProjectionWeights w = projections(params, p + ".global_cross_attn");
        const Tensor nx = norm(params, p + ".global_cross_norm", x);
        const Tensor o = cross_attention(project_heads(nx, w.wq, heads), project_heads(enc.globals, w.wk, heads),
                                         project_heads(enc.globals, w.wv, heads));
        x = add(x, c.drop(combine_heads(o, w.wo)));
      }
      const ProjectionWeights w = projections(params, p + ".cross_attn");
      const Tensor nx = norm(params, p + ".cross_norm", x);
      Tensor q = project_heads(nx, w.wq, heads);
      Tensor k = project_heads(enc.tokens, w.wk, heads);
      const Tensor v = project_heads(enc.tokens, w.wv, heads);
      if (rope) {
        q = rope_apply(q, dec_pos, *rope);
        k = rope_apply(k, enc_pos, *rope);
      }
      x = add(x, c.drop(combine_heads(cross_attention(q, k, v), w.wo)));
    }
    x = add(x, c.drop(feed_forward(params, p + ".ffn", norm(params, p + ".ffn_norm", x))));
  }
  x = norm(params, "decoder.final_norm", x);
  if (cfg.tie_embeddings) return matmul(x, transpose(params.at("embed.tokens")));
  return matmul(x, params.at("lm_head"));
}

Tensor seq2seq_loss(const ModelConfig& cfg, const ParamStore& params, std::span<const std::int64_t> input_ids,
                    std::span<const std::int64_t> target_ids, const ForwardOptions& opts) {
  if (target_ids.empty()) throw DimensionError("target is empty");
  std::vector<std::int64_t> dec_in;
  dec_in.reserve(target_ids.size());
  dec_in.push_back(cfg.bos_id);
  dec_in.insert(dec_in.end(), target_ids.begin(), target_ids.end() - 1);
  const EncoderOutput enc = encoder_forward(cfg, params, input_ids, opts);
  return cross_entropy(decoder_forward(cfg, params, dec_in, enc, opts), target_ids, cfg.pad_id);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> last_row_log_softmax(const Tensor& logits) {
  const std::size_t v = logits.dim(1);
  auto row = logits.data().subspan((logits.dim(0) - 1) * v, v);
  const double mx = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (double l : row) z += std::exp(l - mx);
  const double lz = mx + std::log(z);
  std::vector<double> out(v);
  for (std::size_t j = 0; j < v; ++j) out[j] = row[j] - lz;
  return out;
}

}  // namespace

std::vector<std::int64_t> greedy_decode(const ModelConfig& cfg, const ParamStore& params,
                                        std::span<const std::int64_t> input_ids, std::size_t max_len,
                                        std::int64_t eos_id) {
  NoGradScope no_grad;
  const EncoderOutput enc = encoder_forward(cfg, params, input_ids);
  max_len = std::min(max_len, cfg.max_output_len);
  std::vector<std::int64_t> dec_in{cfg.bos_id};
  std::vector<std::int64_t> out;
  while (out.size() < max_len) {
    const Tensor logits = decoder_forward(cfg, params, dec_in, enc);
    const std::size_t v = logits.dim(1);
    auto row = logits.data().subspan((logits.dim(0) - 1) * v, v);
    const auto next = static_cast<std::int64_t>(std::max_element(row.begin(), row.end()) - row.begin());
    out.push_back(next);
    if (next == eos_id) break;
    dec_in.push_back(next);
  }
  return out;
}

double length_penalty(std::size_t len, double alpha) {
  return std::pow((5.0 + static_cast<double>(len)) / 6.0, alpha);
}

std::vector<Hypothesis> beam_search(const ModelConfig& cfg, const ParamStore& params,
                                    std::span<const std::int64_t> input_ids, std::size_t beam_size, double alpha,
                                    std::size_t max_len) {
  if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
  NoGradScope no_grad;
  const EncoderOutput enc = encoder_forward(cfg, params, input_ids);
  max_len = std::min(max_len, cfg.max_output_len);

  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> finished;
  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    struct Candidate {
      std::size_t parent;
      std::int64_t token;
      double log_prob;
    };
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < live.size(); ++b) {
      std::vector<std::int64_t> dec_in{cfg.bos_id};
      dec_in.insert(dec_in.end(), live[b].ids.begin(), live[b].ids.end());
      const auto lp = last_row_log_softmax(decoder_forward(cfg, params, dec_in, enc));
      for (std::size_t t = 0; t < lp.size(); ++t) cands.push_back({b, static_cast<std::int64_t>(t), live[b].log_prob + lp[t]});
    }
    // stable: ties keep the lower (beam, token) order, matching greedy argmax
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.log_prob > b.log_prob; });
    cands.resize(std::min(cands.size(), beam_size));
    std::vector<Hypothesis> next;
    for (const Candidate& cand : cands) {
      Hypothesis h;
      h.ids = live[cand.parent].ids;
      h.ids.push_back(cand.token);
      h.log_prob = cand.log_prob;
      h.score = h.log_prob / length_penalty(h.ids.size(), alpha);
      if (cand.token == cfg.eos_id || h.ids.size() == max_len) finished.push_back(std::move(h));
      else next.push_back(std::move(h));
    }
    live = std::move(next);
  }
  for (auto& h : live) finished.push_back(std::move(h));
  std::stable_sort(finished.begin(), finished.end(), [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
  return finished;
}

std::vector<std::int64_t> beam_decode(const ModelConfig& cfg, const ParamStore& params,
                                      std::span<const std::int64_t> input_ids, std::size_t beam_size, double alpha,
                                      std::size_t max_len) {
  auto hyps = beam_search(cfg, params, input_ids, beam_size, alpha, max_len);
  if (hyps.empty()) return {};
  return hyps.front().ids;
}

}  // namespace longattn
