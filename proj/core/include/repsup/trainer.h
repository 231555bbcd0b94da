// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loop (SGD with momentum over per-sequence graphs), held-out
// evaluation helpers and the W x N x T sweep harness.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "repsup/corpus.h"
#include "repsup/decoding.h"
#include "repsup/metrics.h"
#include "repsup/model.h"
#include "repsup/objectives.h"

namespace repsup {

struct TrainConfig {
  LossConfig loss;
  int batch_size = 16;
  double learning_rate = 3e-3;
  int epochs = 10;
  std::uint64_t seed = 0;
  /// Steps between eval callbacks; 0 disables them.
  int eval_every = 0;
  double momentum = 0.9;
  /// Global gradient-norm clip; 0 disables clipping.
  double clip_norm = 0.0;

  void validate() const;
};

struct Example {
  TokenSeq src;
  TokenSeq tgt;  // ends with EOS
};

std::vector<Example> encode_pairs(const Vocab& vocab, const std::vector<CorpusPair>& pairs);

struct LogRow {
  std::int64_t step = 0;
  int epoch = 0;
  double ce = 0.0;     // batch mean
  double aux = 0.0;    // batch mean, unweighted
  double total = 0.0;  // batch mean of the optimised loss
};

/// Everything needed to continue a run exactly.
struct TrainState {
  ModelParams params;
  std::vector<std::vector<double>> momentum;  // aligned with named_parameters()
  std::int64_t step = 0;
};

/// A non-finite loss. The message names the step and the example ids.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::int64_t step, std::vector<std::size_t> batch);
  std::int64_t step() const noexcept { return step_; }
  const std::vector<std::size_t>& batch() const noexcept { return batch_; }

 private:
  std::int64_t step_;
  std::vector<std::size_t> batch_;
};

struct TrainHooks {
  /// Called every eval_every steps with the current parameters.
  std::function<void(std::int64_t step, const ModelParams&)> on_eval;
  /// Stop once this many global steps have been taken (resume-able).
  std::optional<std::int64_t> stop_after_steps;
};

struct TrainResult {
  TrainState state;
  std::vector<LogRow> log;
};

TrainState initial_state(const ModelConfig& config);

/// Number of optimiser steps in one epoch.
std::int64_t steps_per_epoch(std::size_t n_examples, int batch_size);

/// Example indices of global step `step`: epoch-seeded permutation, then
/// consecutive slices of batch_size (the last one may be short).
std::vector<std::size_t> batch_indices(std::size_t n_examples, const TrainConfig& cfg,
                                       std::int64_t step);

/// Continues `state` until cfg.epochs are done or the stop hook fires.
TrainResult train(TrainState state, const TrainConfig& cfg, const std::vector<Example>& data,
                  const TrainHooks& hooks = {});
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const std::vector<Example>& data, const TrainHooks& hooks = {});

/// CSV with header "step,epoch,ce_loss,aux_loss,total".
std::string training_log_csv(const std::vector<LogRow>& log);

/// Teacher-forced argmax accuracy over all target positions.
double token_accuracy(const ModelParams& params, const std::vector<Example>& data);

/// Decodes every source and returns the detokenized hypotheses.
std::vector<std::string> decode_corpus(const ModelParams& params, const Vocab& vocab,
                                       const std::vector<CorpusPair>& pairs,
                                       const DecodeConfig& cfg);

/// Metrics of hypotheses against the pairs' references.
MetricsReport evaluate_hypotheses(const std::vector<std::string>& hypotheses,
                                  const std::vector<CorpusPair>& pairs,
                                  const MetricsOptions& options = {});

struct ExperimentData {
  Vocab vocab;
  std::vector<Example> train;
  std::vector<CorpusPair> eval;
};

struct RunOutcome {
  TrainResult training;
  std::vector<std::string> hypotheses;
  MetricsReport report;
};

/// Train, decode the eval split and score it.
RunOutcome train_and_evaluate(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                              const ExperimentData& data, const DecodeConfig& decode_cfg,
                              const MetricsOptions& metrics = {});

struct SweepGrid {
  std::vector<double> weights;        // W
  std::vector<int> windows;           // N ("PredToken")
  std::vector<double> temperatures;   // T
};

struct SweepCell {
  double weight = 0.0;
  int window = 0;
  double temperature = 0.0;
  std::optional<MetricsReport> report;
  std::string error;  // set when the cell failed
};

/// One CTSD run per grid cell, all from the same seed and data. Failed
/// cells keep their error message and the sweep continues.
std::vector<SweepCell> sweep(const ModelConfig& model_cfg, const TrainConfig& base,
                             const SweepGrid& grid, const ExperimentData& data,
                             const DecodeConfig& decode_cfg,
                             const MetricsOptions& metrics = {});

}  // namespace repsup
