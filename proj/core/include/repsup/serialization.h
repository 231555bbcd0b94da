// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON mapping of the configuration structs. Enum fields use their string
// names; missing keys keep the struct defaults, unknown keys are rejected
// with a ConfigError naming the dotted path.

#pragma once

#include "json.hpp"
#include "repsup/decoding.h"
#include "repsup/model.h"
#include "repsup/objectives.h"
#include "repsup/trainer.h"

namespace repsup {

nlohmann::ordered_json to_json(const ModelConfig& c);
nlohmann::ordered_json to_json(const LossConfig& c);
nlohmann::ordered_json to_json(const DecodeConfig& c);
nlohmann::ordered_json to_json(const TrainConfig& c);

/// `path` prefixes field names in errors ("model", "train.loss", ...).
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& path = "model");
LossConfig loss_config_from_json(const nlohmann::json& j, const std::string& path = "loss");
DecodeConfig decode_config_from_json(const nlohmann::json& j,
                                     const std::string& path = "decode");
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& path = "train");

/// Reads `key` from object `j` into `out` if present; type mismatches become
/// ConfigError(path.key).
template <typename T>
void read_field(const nlohmann::json& j, const std::string& path, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + "." + key, std::string("wrong type: ") + e.what());
  }
}

/// Throws ConfigError if `j` is not an object or has keys outside `allowed`.
void require_keys(const nlohmann::json& j, const std::string& path,
                  std::initializer_list<const char*> allowed);

}  // namespace repsup
