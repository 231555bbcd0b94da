// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0
//
// The `repsup` command line: gen-data, train, decode, eval, analyze, sweep
// and compare. Exit codes: 0 success, 1 configuration error, 2 usage error,
// 3 any other failure.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "repsup/decoding.h"
#include "repsup/model.h"
#include "repsup/trainer.h"

namespace repsup::cli {

struct DataConfig {
  std::string path;  // JSONL corpus; empty means "generate"
  std::uint64_t seed = 0;
  std::size_t n_pairs = 2000;
  double stack_ratio = 0.5;
  double eval_fraction = 0.1;
  std::size_t vocab_size = 512;
};

struct MetricsConfig {
  int rep_w_window = 16;
  double percentile = 100.0;
};

struct SweepConfig {
  std::vector<double> weights{0.0, 0.5, 1.0};
  std::vector<int> windows{5, 10};
  std::vector<double> temperatures{1.0, 5.0};
};

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  DecodeConfig decode;
  MetricsConfig metrics;
  DataConfig data;
  SweepConfig sweep;
  std::vector<std::string> compare{"CE", "CT", "CTSD"};
  std::string out_dir = "out";

  /// Throws ConfigError with the full dotted path.
  void validate() const;
};

nlohmann::ordered_json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_from_json(const nlohmann::json& j);

/// Defaults, then `config_path` (if non-empty), then REPL_SEED, then each
/// "dotted.key=value" override (values parsed as JSON, else taken as strings).
ExperimentConfig resolve_config(const std::string& config_path,
                                const std::vector<std::string>& overrides);

int cli_main(int argc, char** argv);
int cli_main(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace repsup::cli
