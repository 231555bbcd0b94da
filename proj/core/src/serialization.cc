// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0

#include "repsup/serialization.h"

#include <algorithm>
#include <cstring>

namespace repsup {

void require_keys(const nlohmann::json& j, const std::string& path,
                  std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  for (const auto& item : j.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) {
      return item.key() == k;
    });
    if (!ok) throw ConfigError(path + "." + item.key(), "unknown key");
  }
}

nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["arch"] = to_string(c.arch);
  j["vocab_size"] = c.vocab_size;
  j["d_model"] = c.d_model;
  j["n_heads"] = c.n_heads;
  j["n_layers"] = c.n_layers;
  j["max_len"] = c.max_len;
  j["tie_output_embedding"] = c.tie_output_embedding;
  j["seed"] = c.seed;
  j["attn_source"] = to_string(c.attn_source);
  return j;
}

nlohmann::ordered_json to_json(const LossConfig& c) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(c.kind);
  j["N"] = c.window;
  j["T"] = c.temperature;
  j["W"] = c.weight;
  j["rho"] = c.rho;
  j["cl_pairing"] = to_string(c.cl_pairing);
  j["negatives"] = to_string(c.negatives);
  j["stop_alpha_s_gradient"] = c.stop_alpha_s_gradient;
  return j;
}

nlohmann::ordered_json to_json(const DecodeConfig& c) {
  nlohmann::ordered_json j;
  j["strategy"] = to_string(c.strategy);
  j["max_new_tokens"] = c.max_new_tokens;
  j["k"] = c.k;
  j["ps_theta"] = c.ps_theta;
  j["cs_alpha"] = c.cs_alpha;
  j["block_n"] = c.block_n;
  j["seed"] = c.seed;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& path) {
  require_keys(j, path, {"arch", "vocab_size", "d_model", "n_heads", "n_layers", "max_len",
                         "tie_output_embedding", "seed", "attn_source"});
  ModelConfig c;
  std::string arch = to_string(c.arch), source = to_string(c.attn_source);
  read_field(j, path, "arch", arch);
  read_field(j, path, "vocab_size", c.vocab_size);
  read_field(j, path, "d_model", c.d_model);
  read_field(j, path, "n_heads", c.n_heads);
  read_field(j, path, "n_layers", c.n_layers);
  read_field(j, path, "max_len", c.max_len);
  read_field(j, path, "tie_output_embedding", c.tie_output_embedding);
  read_field(j, path, "seed", c.seed);
  read_field(j, path, "attn_source", source);
  try {
    c.arch = parse_arch(arch);
    c.attn_source = parse_attn_source(source);
  } catch (const ConfigError& e) {
    throw e.rebased(path);
  }
  return c;
}

LossConfig loss_config_from_json(const nlohmann::json& j, const std::string& path) {
  require_keys(j, path, {"kind", "N", "T", "W", "rho", "cl_pairing", "negatives",
                         "stop_alpha_s_gradient"});
  LossConfig c;
  std::string kind = to_string(c.kind), pairing = to_string(c.cl_pairing),
              negatives = to_string(c.negatives);
  read_field(j, path, "kind", kind);
  read_field(j, path, "N", c.window);
  read_field(j, path, "T", c.temperature);
  read_field(j, path, "W", c.weight);
  read_field(j, path, "rho", c.rho);
  read_field(j, path, "cl_pairing", pairing);
  read_field(j, path, "negatives", negatives);
  read_field(j, path, "stop_alpha_s_gradient", c.stop_alpha_s_gradient);
  try {
    c.kind = parse_loss_kind(kind);
    c.cl_pairing = parse_cl_pairing(pairing);
    c.negatives = parse_negative_source(negatives);
  } catch (const ConfigError& e) {
    throw e.rebased(path);
  }
  return c;
}

DecodeConfig decode_config_from_json(const nlohmann::json& j, const std::string& path) {
  require_keys(j, path,
               {"strategy", "max_new_tokens", "k", "ps_theta", "cs_alpha", "block_n", "seed"});
  DecodeConfig c;
  std::string strategy = to_string(c.strategy);
  read_field(j, path, "strategy", strategy);
  read_field(j, path, "max_new_tokens", c.max_new_tokens);
  read_field(j, path, "k", c.k);
  read_field(j, path, "ps_theta", c.ps_theta);
  read_field(j, path, "cs_alpha", c.cs_alpha);
  read_field(j, path, "block_n", c.block_n);
  read_field(j, path, "seed", c.seed);
  try {
    c.strategy = parse_decode_strategy(strategy);
  } catch (const ConfigError& e) {
    throw e.rebased(path);
  }
  return c;
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["loss"] = to_json(c.loss);
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["eval_every"] = c.eval_every;
  j["momentum"] = c.momentum;
  j["clip_norm"] = c.clip_norm;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& path) {
  require_keys(j, path, {"loss", "batch_size", "learning_rate", "epochs", "seed", "eval_every",
                         "momentum", "clip_norm"});
  TrainConfig c;
  if (j.contains("loss")) c.loss = loss_config_from_json(j["loss"], path + ".loss");
  read_field(j, path, "batch_size", c.batch_size);
  read_field(j, path, "learning_rate", c.learning_rate);
  read_field(j, path, "epochs", c.epochs);
  read_field(j, path, "seed", c.seed);
  read_field(j, path, "eval_every", c.eval_every);
  read_field(j, path, "momentum", c.momentum);
  read_field(j, path, "clip_norm", c.clip_norm);
  return c;
}

}  // namespace repsup
