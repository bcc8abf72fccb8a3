#pragma once

#include <string>

#include <json.hpp>

#include "longattn/model.hpp"

namespace longattn {

using Json = nlohmann::ordered_json;

Json to_json(const ModelConfig& cfg);
/// Missing keys keep their defaults; unknown keys are a ConfigError. The
/// result is validated.
ModelConfig model_config_from_json(const Json& doc);

/// Hex digest of every architecture-relevant field (dropout excluded).
/// Two configs with equal digests lay out and apply parameters identically.
std::string architecture_hash(const ModelConfig& cfg);

/// Assigns `value` to the dotted `path` of an existing key. The value is
/// parsed as JSON when possible, otherwise taken as a string. Unknown paths
/// are a ConfigError.
void apply_override(Json& doc, const std::string& path, const std::string& value);

/// Rejects keys of `doc` that `defaults` does not have, recursively.
void check_known_keys(const Json& doc, const Json& defaults, const std::string& where = "");

}  // namespace longattn
