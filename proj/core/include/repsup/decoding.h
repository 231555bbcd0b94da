// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0
//
// Inference-time generation and the decoding-stage repetition suppressors:
// penalized sampling, contrastive search and n-gram blocking.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "repsup/common.h"
#include "repsup/model.h"

namespace repsup {

enum class DecodeStrategy {
  kGreedy,
  kTopK,
  kPenalizedSampling,
  kContrastiveSearch,
  kGreedyNgramBlock,
};

std::string to_string(DecodeStrategy strategy);
DecodeStrategy parse_decode_strategy(const std::string& name);

struct DecodeConfig {
  DecodeStrategy strategy = DecodeStrategy::kGreedy;
  int max_new_tokens = 32;
  int k = 4;
  double ps_theta = 1.2;
  double cs_alpha = 0.6;
  int block_n = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// What a decoder needs from a model at each step. The transformer adapter is
/// the production implementation; tests can supply hand-built models.
class StepModel {
 public:
  virtual ~StepModel() = default;
  virtual int vocab_size() const = 0;
  /// Next-token logits after `prefix` (which starts with BOS).
  virtual std::vector<double> next_logits(const TokenSeq& src,
                                          const TokenSeq& prefix) const = 0;
  /// Final-layer hidden state at every position of `prefix`.
  virtual std::vector<std::vector<double>> hidden_states(
      const TokenSeq& src, const TokenSeq& prefix) const = 0;
};

class TransformerStepModel : public StepModel {
 public:
  explicit TransformerStepModel(const ModelParams& params) : params_(params) {}
  int vocab_size() const override { return params_.config.vocab_size; }
  std::vector<double> next_logits(const TokenSeq& src,
                                  const TokenSeq& prefix) const override;
  std::vector<std::vector<double>> hidden_states(
      const TokenSeq& src, const TokenSeq& prefix) const override;

 private:
  const ModelParams& params_;
};

struct StepDiagnostic {
  int step = 0;
  TokenId token = 0;
  double p_pre = 0.0;   // probability of the chosen token before suppression
  double p_post = 0.0;  // probability under the distribution actually used
  /// PS: logit reduction on the chosen token; CS: alpha * max similarity;
  /// n-gram blocking: number of blocked tokens; 0 otherwise.
  double suppression = 0.0;
  bool fallback = false;
};

struct DecodeResult {
  TokenSeq tokens;  // generated tokens, EOS excluded
  bool hit_eos = false;
  bool fallback_fired = false;
  std::vector<StepDiagnostic> steps;
};

DecodeResult decode(const StepModel& model, const TokenSeq& src,
                    const DecodeConfig& cfg);
DecodeResult decode(const ModelParams& params, const TokenSeq& src,
                    const DecodeConfig& cfg);

/// The PS transform on one logit row: shift so the minimum is 0, then divide
/// the logits of `history` tokens (except EOS) by theta.
std::vector<double> penalize_logits(std::vector<double> logits,
                                    const TokenSeq& history, double theta);

/// One JSON object per line.
std::string diagnostics_jsonl(const DecodeResult& result, std::size_t sentence);

}  // namespace repsup
