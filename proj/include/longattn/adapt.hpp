#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "longattn/model.hpp"

namespace longattn {

constexpr int kCheckpointFormatVersion = 1;

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

/// Parameters at 32-bit storage precision plus the config they belong to.
/// On disk: a directory with manifest.json, params.bin (little-endian f32,
/// concatenated in manifest order) and config.json.
struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  ModelConfig config;
  std::vector<CheckpointTensor> params;

  const CheckpointTensor* find(const std::string& name) const;
  std::size_t num_elements() const;
};

/// Rounds every parameter to f32.
Checkpoint make_checkpoint(const ModelConfig& cfg, const ParamStore& params);

/// Upcasts to trainable f64 tensors after checking names and shapes against
/// `cfg` and that the checkpoint was built for the same architecture.
ParamStore load_params(const Checkpoint& ckpt, const ModelConfig& cfg);
inline ParamStore load_params(const Checkpoint& ckpt) { return load_params(ckpt, ckpt.config); }

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Reads manifest.json + params.bin only (no config), for inspection.
std::vector<CheckpointTensor> read_tensors(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Weight surgery. Each returns a new checkpoint with parameters in the
// canonical order of its config; untouched tensors are copied bit for bit.

/// Swaps dense self-attention for block-local attention; parameters are
/// reused as they are.
Checkpoint port_to_local(const Checkpoint& ckpt, const AttentionSpec& new_attn);

/// Adds g global embeddings, each a copy of a vocabulary row sampled
/// uniformly with replacement, and per-layer global LayerNorms cloned from
/// that layer's attention input LayerNorm.
Checkpoint port_to_global_local(const Checkpoint& ckpt, const AttentionSpec& new_attn, std::uint64_t seed);

/// Tiles the learned encoder position table up to `new_max_len` rows.
Checkpoint replicate_positions(const Checkpoint& ckpt, std::size_t new_max_len);

/// Keeps encoder-decoder attention only in `keep_layers`.
Checkpoint drop_cross_attention(const Checkpoint& ckpt, const std::vector<std::size_t>& keep_layers);

}  // namespace longattn
