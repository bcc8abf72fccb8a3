#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "longattn/attention.hpp"
#include "longattn/posenc.hpp"
#include "longattn/rng.hpp"
#include "longattn/tensor.hpp"

namespace longattn {

struct ModelConfig {
  std::size_t vocab_size = 64;
  std::size_t d_model = 32;
  std::size_t num_heads = 4;
  std::size_t d_ff = 64;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  AttentionSpec attention;  // num_heads / head_dim are filled from the fields above
  PosEncConfig posenc;
  std::vector<std::size_t> cross_attn_layers{0, 1};
  bool decoder_global_attn = false;
  std::size_t max_input_len = 512;
  std::size_t max_output_len = 64;
  double dropout_p = 0.0;
  bool tie_embeddings = true;
  std::int64_t mask_id = 0;
  std::int64_t pad_id = 1;
  std::int64_t eos_id = 2;
  std::int64_t bos_id = 3;

  void validate() const;
  std::size_t head_dim() const { return d_model / num_heads; }
  /// The attention spec with head geometry taken from this config.
  AttentionSpec attention_spec() const;
  bool has_cross_attention(std::size_t dec_layer) const;
  bool operator==(const ModelConfig&) const = default;
};

/// Named parameter tensors in a fixed order.
class ParamStore {
 public:
  void add(std::string name, Tensor value);
  bool contains(const std::string& name) const { return index_.contains(name); }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  /// Replaces the tensor stored under `name` (shape may change).
  void set(const std::string& name, Tensor value);
  void erase(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  std::size_t num_elements() const;
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Every parameter the config implies, in canonical order.
std::vector<std::pair<std::string, Shape>> param_shapes(const ModelConfig& cfg);
std::size_t count_params(const ModelConfig& cfg);

/// Truncated normal weights: projection matrices std fan_in^-1/2, token
/// embeddings std d_model^-1/2 (the sqrt(d_model)-scaled lookup has unit
/// scale), other tables std 0.02. Unit LayerNorm gains, zero biases.
ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Throws CheckpointError unless `params` holds exactly the names and shapes
/// of param_shapes(cfg).
void check_params(const ModelConfig& cfg, const ParamStore& params);

struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout
};

struct EncoderOutput {
  Tensor tokens;   // [L, d_model]
  Tensor globals;  // [g, d_model]; undefined unless GlobalLocal
};

EncoderOutput encoder_forward(const ModelConfig& cfg, const ParamStore& params, std::span<const std::int64_t> ids,
                              const ForwardOptions& opts = {});

/// Logits [T, V] for decoder inputs `out_ids` (already shifted, starting
/// with BOS).
Tensor decoder_forward(const ModelConfig& cfg, const ParamStore& params, std::span<const std::int64_t> out_ids,
                       const EncoderOutput& enc, const ForwardOptions& opts = {});

/// Teacher-forced cross entropy: the decoder reads [BOS, target[:-1]] and
/// predicts `target`; padding positions are ignored.
Tensor seq2seq_loss(const ModelConfig& cfg, const ParamStore& params, std::span<const std::int64_t> input_ids,
                    std::span<const std::int64_t> target_ids, const ForwardOptions& opts = {});

/// Argmax decoding; the returned ids include the EOS when one is produced.
std::vector<std::int64_t> greedy_decode(const ModelConfig& cfg, const ParamStore& params,
                                        std::span<const std::int64_t> input_ids, std::size_t max_len,
                                        std::int64_t eos_id);

struct Hypothesis {
  std::vector<std::int64_t> ids;
  double log_prob = 0.0;
  double score = 0.0;  // log_prob / length_penalty
};

/// ((5 + len) / 6)^alpha
double length_penalty(std::size_t len, double alpha);

/// All hypotheses kept by beam search, best score first.
std::vector<Hypothesis> beam_search(const ModelConfig& cfg, const ParamStore& params,
                                    std::span<const std::int64_t> input_ids, std::size_t beam_size, double alpha,
                                    std::size_t max_len);

std::vector<std::int64_t> beam_decode(const ModelConfig& cfg, const ParamStore& params,
                                      std::span<const std::int64_t> input_ids, std::size_t beam_size, double alpha,
                                      std::size_t max_len);

}  // namespace longattn
