#include "longattn/config.hpp"

#include <cstdio>

namespace longattn {

Json to_json(const ModelConfig& cfg) {
  Json j;
  j["vocab_size"] = cfg.vocab_size;
  j["d_model"] = cfg.d_model;
  j["num_heads"] = cfg.num_heads;
  j["d_ff"] = cfg.d_ff;
  j["enc_layers"] = cfg.enc_layers;
  j["dec_layers"] = cfg.dec_layers;
  j["attention"] = {{"variant", to_string(cfg.attention.variant)},
                    {"block_size", cfg.attention.block_size},
                    {"num_global", cfg.attention.num_global},
                    {"staggered", cfg.attention.staggered}};
  j["posenc"] = {{"scheme", to_string(cfg.posenc.scheme)},
                 {"sinusoidal_factor", cfg.posenc.sinusoidal_factor},
                 {"t5_num_buckets", cfg.posenc.t5_num_buckets},
                 {"t5_max_distance", cfg.posenc.t5_max_distance},
                 {"learned_max_len", cfg.posenc.learned_max_len}};
  j["cross_attn_layers"] = cfg.cross_attn_layers;
  j["decoder_global_attn"] = cfg.decoder_global_attn;
  j["max_input_len"] = cfg.max_input_len;
  j["max_output_len"] = cfg.max_output_len;
  j["dropout_p"] = cfg.dropout_p;
  j["tie_embeddings"] = cfg.tie_embeddings;
  j["mask_id"] = cfg.mask_id;
  j["pad_id"] = cfg.pad_id;
  j["eos_id"] = cfg.eos_id;
  j["bos_id"] = cfg.bos_id;
  return j;
}

void check_known_keys(const Json& doc, const Json& defaults, const std::string& where) {
  if (!doc.is_object()) throw ConfigError("expected an object at '" + (where.empty() ? std::string("<root>") : where) + "'");
  for (const auto& [key, value] : doc.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (defaults[key].is_object()) check_known_keys(value, defaults[key], path);
  }
}

namespace {

template <typename T>
void read(const Json& doc, const char* key, T& out, const std::string& where) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config key '" + where + key + "': " + e.what());
  }
}

}  // namespace

ModelConfig model_config_from_json(const Json& doc) {
  ModelConfig cfg;
  check_known_keys(doc, to_json(cfg));
  read(doc, "vocab_size", cfg.vocab_size, "");
  read(doc, "d_model", cfg.d_model, "");
  read(doc, "num_heads", cfg.num_heads, "");
  read(doc, "d_ff", cfg.d_ff, "");
  read(doc, "enc_layers", cfg.enc_layers, "");
  read(doc, "dec_layers", cfg.dec_layers, "");
  if (doc.contains("attention")) {
    const Json& a = doc["attention"];
    std::string variant = to_string(cfg.attention.variant);
    read(a, "variant", variant, "attention.");
    cfg.attention.variant = parse_attention_variant(variant);
    read(a, "block_size", cfg.attention.block_size, "attention.");
    read(a, "num_global", cfg.attention.num_global, "attention.");
    read(a, "staggered", cfg.attention.staggered, "attention.");
  }
  if (doc.contains("posenc")) {
    const Json& p = doc["posenc"];
    std::string scheme = to_string(cfg.posenc.scheme);
    read(p, "scheme", scheme, "posenc.");
    cfg.posenc.scheme = parse_pos_scheme(scheme);
    read(p, "sinusoidal_factor", cfg.posenc.sinusoidal_factor, "posenc.");
    read(p, "t5_num_buckets", cfg.posenc.t5_num_buckets, "posenc.");
    read(p, "t5_max_distance", cfg.posenc.t5_max_distance, "posenc.");
    read(p, "learned_max_len", cfg.posenc.learned_max_len, "posenc.");
  }
  read(doc, "cross_attn_layers", cfg.cross_attn_layers, "");
  read(doc, "decoder_global_attn", cfg.decoder_global_attn, "");
  read(doc, "max_input_len", cfg.max_input_len, "");
  read(doc, "max_output_len", cfg.max_output_len, "");
  read(doc, "dropout_p", cfg.dropout_p, "");
  read(doc, "tie_embeddings", cfg.tie_embeddings, "");
  read(doc, "mask_id", cfg.mask_id, "");
  read(doc, "pad_id", cfg.pad_id, "");
  read(doc, "eos_id", cfg.eos_id, "");
  read(doc, "bos_id", cfg.bos_id, "");
  cfg.validate();
  return cfg;
}

std::string architecture_hash(const ModelConfig& cfg) {
  Json j = to_json(cfg);
  j.erase("dropout_p");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void apply_override(Json& doc, const std::string& path, const std::string& value) {
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) throw ConfigError("unknown config key '" + path + "'");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  Json parsed = Json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;
  if (node->is_string() && !parsed.is_string()) parsed = value;
  *node = parsed;
}

}  // namespace longattn
