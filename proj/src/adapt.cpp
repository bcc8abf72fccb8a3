#include "longattn/adapt.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <set>

#include "longattn/config.hpp"
#include "longattn/posenc.hpp"

namespace longattn {

namespace fs = std::filesystem;

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : params)
    if (t.name == name) return &t;
  return nullptr;
}

std::size_t Checkpoint::num_elements() const {
  std::size_t n = 0;
  for (const auto& t : params) n += t.data.size();
  return n;
}

Checkpoint make_checkpoint(const ModelConfig& cfg, const ParamStore& params) {
  check_params(cfg, params);
  Checkpoint ckpt;
  ckpt.config = cfg;
  for (const auto& [name, shape] : param_shapes(cfg)) {
    auto src = params.at(name).data();
    CheckpointTensor t{name, shape, std::vector<float>(src.size())};
    std::transform(src.begin(), src.end(), t.data.begin(), [](double v) { return static_cast<float>(v); });
    ckpt.params.push_back(std::move(t));
  }
  return ckpt;
}

ParamStore load_params(const Checkpoint& ckpt, const ModelConfig& cfg) {
  if (ckpt.format_version != kCheckpointFormatVersion) {
    throw CheckpointError("checkpoint format version " + std::to_string(ckpt.format_version) + " is not supported (expected " +
                          std::to_string(kCheckpointFormatVersion) + ")");
  }
  ParamStore params;
  for (const auto& t : ckpt.params) {
    params.add(t.name, Tensor(t.shape, std::vector<double>(t.data.begin(), t.data.end()), true));
  }
  check_params(cfg, params);
  if (architecture_hash(cfg) != architecture_hash(ckpt.config)) {
    throw CheckpointError("checkpoint was built for architecture " + architecture_hash(ckpt.config) +
                          " but the requested config hashes to " + architecture_hash(cfg) +
                          " (attention layout, positions or layer sets differ)");
  }
  return params;
}

// ---------------------------------------------------------------------------

namespace {

void write_f32(std::ostream& out, std::span<const float> values) {
  std::vector<unsigned char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<float> decode_f32(const std::vector<unsigned char>& blob, std::size_t offset, std::size_t count) {
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(blob[offset + i * 4 + b]) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open " + path.string());
  Json doc = Json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw CheckpointError("malformed JSON in " + path.string());
  return doc;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
  fs::create_directories(dir);
  Json manifest;
  manifest["format_version"] = ckpt.format_version;
  manifest["dtype"] = "float32";
  manifest["architecture_hash"] = architecture_hash(ckpt.config);
  Json entries = Json::object();
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.params) {
    entries[t.name] = {{"shape", t.shape}, {"dtype", "float32"}, {"offset", offset}};
    offset += t.data.size() * 4;
  }
  manifest["params"] = entries;
  {
    std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + (dir / "params.bin").string());
    for (const auto& t : ckpt.params) write_f32(out, t.data);
  }
  std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2) << "\n";
  std::ofstream(dir / "config.json", std::ios::trunc) << to_json(ckpt.config).dump(2) << "\n";
}

std::vector<CheckpointTensor> read_tensors(const fs::path& dir) {
  const Json manifest = read_json(dir / "manifest.json");
  if (!manifest.contains("format_version") || manifest["format_version"] != kCheckpointFormatVersion) {
    throw CheckpointError("unsupported checkpoint format_version in " + (dir / "manifest.json").string());
  }
  std::ifstream in(dir / "params.bin", std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + (dir / "params.bin").string());
  const std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::vector<CheckpointTensor> tensors;
  std::uint64_t expected_offset = 0;
  for (const auto& [name, entry] : manifest.at("params").items()) {
    if (entry.value("dtype", "") != "float32") throw CheckpointError("parameter " + name + " is not float32");
    const Shape shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    if (offset != expected_offset) {
      throw CheckpointError("parameter " + name + " offset " + std::to_string(offset) + " breaks the contiguous layout (expected " +
                            std::to_string(expected_offset) + ")");
    }
    const std::size_t count = numel(shape);
    if (offset + count * 4 > blob.size()) throw CheckpointError("params.bin is too short for parameter " + name);
    tensors.push_back({name, shape, decode_f32(blob, offset, count)});
    expected_offset = offset + count * 4;
  }
  if (expected_offset != blob.size()) {
    throw CheckpointError("params.bin holds " + std::to_string(blob.size()) + " bytes, manifest describes " +
                          std::to_string(expected_offset));
  }
  return tensors;
}

Checkpoint load_checkpoint(const fs::path& dir) {
  Checkpoint ckpt;
  ckpt.params = read_tensors(dir);
  try {
    ckpt.config = model_config_from_json(read_json(dir / "config.json"));
  } catch (const ConfigError& e) {
    throw CheckpointError("checkpoint config.json: " + std::string(e.what()));
  }
  const Json manifest = read_json(dir / "manifest.json");
  if (manifest.contains("architecture_hash") && manifest["architecture_hash"] != architecture_hash(ckpt.config)) {
    throw CheckpointError("config.json does not match the architecture recorded in the manifest");
  }
  return ckpt;
}

// ---------------------------------------------------------------------------

namespace {

/// Reorders (and checks) tensors to the canonical order of ckpt.config.
Checkpoint canonicalize(ModelConfig cfg, std::vector<CheckpointTensor> tensors) {
  Checkpoint out;
  out.config = std::move(cfg);
  for (const auto& [name, shape] : param_shapes(out.config)) {
    auto it = std::find_if(tensors.begin(), tensors.end(), [&](const CheckpointTensor& t) { return t.name == name; });
    if (it == tensors.end()) throw CheckpointError("surgery result lacks parameter " + name);
    if (it->shape != shape) throw CheckpointError("surgery result has wrong shape for " + name);
    out.params.push_back(std::move(*it));
    tensors.erase(it);
  }
  if (!tensors.empty()) throw CheckpointError("surgery left unexpected parameter " + tensors.front().name);
  return out;
}

}  // namespace

Checkpoint port_to_local(const Checkpoint& ckpt, const AttentionSpec& new_attn) {
  if (new_attn.variant != AttentionVariant::BlockLocal) throw ConfigError("port_to_local needs a block_local spec");
  if (ckpt.config.attention.variant == AttentionVariant::GlobalLocal) {
    throw ConfigError("port_to_local expects a checkpoint without global tokens");
  }
  ModelConfig cfg = ckpt.config;
  cfg.attention = new_attn;
  cfg.attention.num_global = 0;
  cfg.validate();
  return canonicalize(cfg, ckpt.params);
}

Checkpoint port_to_global_local(const Checkpoint& ckpt, const AttentionSpec& new_attn, std::uint64_t seed) {
  if (new_attn.variant != AttentionVariant::GlobalLocal || new_attn.num_global == 0) {
    throw ConfigError("port_to_global_local needs a global_local spec with num_global >= 1");
  }
  if (ckpt.config.attention.variant == AttentionVariant::GlobalLocal || ckpt.find("encoder.globals")) {
    throw ConfigError("checkpoint already has global parameters");
  }
  ModelConfig cfg = ckpt.config;
  cfg.attention = new_attn;
  cfg.validate();
  std::vector<CheckpointTensor> tensors = ckpt.params;

  const CheckpointTensor* embed = ckpt.find("embed.tokens");
  if (!embed) throw CheckpointError("checkpoint lacks embed.tokens");
  const std::size_t vocab = embed->shape[0], d = embed->shape[1];
  Rng rng(seed);
  CheckpointTensor globals{"encoder.globals", {new_attn.num_global, d}, {}};
  for (std::size_t r = 0; r < new_attn.num_global; ++r) {
    const std::size_t row = rng.below(vocab);
    globals.data.insert(globals.data.end(), embed->data.begin() + row * d, embed->data.begin() + (row + 1) * d);
  }
  tensors.push_back(std::move(globals));
  for (std::size_t i = 0; i < cfg.enc_layers; ++i) {
    const std::string p = "encoder.layer" + std::to_string(i);
    for (const char* part : {".gain", ".bias"}) {
      const CheckpointTensor* src = ckpt.find(p + ".attn_norm" + part);
      if (!src) throw CheckpointError("checkpoint lacks " + p + ".attn_norm" + part);
      tensors.push_back({p + ".global_norm" + part, src->shape, src->data});
    }
  }
  return canonicalize(cfg, std::move(tensors));
}

Checkpoint replicate_positions(const Checkpoint& ckpt, std::size_t new_max_len) {
  if (ckpt.config.posenc.scheme != PosScheme::LearnedAbsolute) {
    throw ConfigError("replicate_positions needs learned absolute positions, checkpoint uses " +
                      to_string(ckpt.config.posenc.scheme));
  }
  const CheckpointTensor* table = ckpt.find("encoder.positions");
  if (!table) throw CheckpointError("checkpoint lacks encoder.positions");
  const Tensor src({table->shape[0], table->shape[1]}, std::vector<double>(table->data.begin(), table->data.end()));
  const Tensor tiled = replicate(src, new_max_len);

  ModelConfig cfg = ckpt.config;
  cfg.max_input_len = new_max_len;
  if (cfg.posenc.learned_max_len) cfg.posenc.learned_max_len = new_max_len;
  cfg.validate();
  std::vector<CheckpointTensor> tensors = ckpt.params;
  for (auto& t : tensors) {
    if (t.name != "encoder.positions") continue;
    t.shape = tiled.shape();
    t.data.assign(tiled.data().begin(), tiled.data().end());  // exact: values were f32
  }
  return canonicalize(cfg, std::move(tensors));
}

Checkpoint drop_cross_attention(const Checkpoint& ckpt, const std::vector<std::size_t>& keep_layers) {
  if (keep_layers.empty()) throw ConfigError("drop_cross_attention needs at least one layer to keep");
  const std::set<std::size_t> keep(keep_layers.begin(), keep_layers.end());
  for (std::size_t layer : keep) {
    if (!ckpt.config.has_cross_attention(layer)) {
      throw ConfigError("decoder layer " + std::to_string(layer) + " has no cross-attention to keep");
    }
  }
  ModelConfig cfg = ckpt.config;
  cfg.cross_attn_layers.assign(keep.begin(), keep.end());
  cfg.validate();
  std::vector<CheckpointTensor> tensors;
  for (const auto& t : ckpt.params) {
    bool dropped = false;
    for (std::size_t layer : ckpt.config.cross_attn_layers) {
      if (keep.contains(layer)) continue;
      const std::string p = "decoder.layer" + std::to_string(layer) + ".";
      for (const char* group : {"cross_norm.", "cross_attn.", "global_cross_norm.", "global_cross_attn."})
        if (t.name.rfind(p + group, 0) == 0) dropped = true;
    }
    if (!dropped) tensors.push_back(t);
  }
  return canonicalize(cfg, std::move(tensors));
}

}  // namespace longattn
