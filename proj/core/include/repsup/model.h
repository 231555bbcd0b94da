// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tiny pre-norm transformer in two layouts: encoder-decoder and decoder-only.
//
// Both layouts produce the same ForwardTrace contract: one row of hidden
// state, logits and source attention per target position. For the
// decoder-only layout the input is `[BOS] src [SEP] tgt...` and the trace
// rows are the positions that predict the target tokens.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "repsup/common.h"
#include "repsup/tensor.h"

namespace repsup {

enum class Arch { kEncoderDecoder, kDecoderOnly };
/// Which attention layers feed atten_t.
enum class AttnSource { kFinalLayer, kMeanAllLayers };

std::string to_string(Arch arch);
std::string to_string(AttnSource source);
Arch parse_arch(const std::string& name);
AttnSource parse_attn_source(const std::string& name);

struct ModelConfig {
  Arch arch = Arch::kEncoderDecoder;
  int vocab_size = 128;
  int d_model = 64;
  int n_heads = 4;
  int n_layers = 2;
  int max_len = 64;
  bool tie_output_embedding = true;
  std::uint64_t seed = 0;
  AttnSource attn_source = AttnSource::kFinalLayer;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  int head_dim() const { return d_model / n_heads; }
  int ffn_dim() const { return 4 * d_model; }
};

struct LayerNormWeights {
  ad::Tensor gamma;
  ad::Tensor beta;
};

/// Projections act on row vectors: q = x wq + bq with wq of shape d x d.
struct AttentionWeights {
  ad::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct FeedForwardWeights {
  ad::Tensor w1, b1, w2, b2;
};

struct EncoderLayer {
  LayerNormWeights ln_attn;
  AttentionWeights self_attn;
  LayerNormWeights ln_ffn;
  FeedForwardWeights ffn;
};

/// cross_attn/ln_cross are only populated for the encoder-decoder layout.
struct DecoderLayer {
  LayerNormWeights ln_self;
  AttentionWeights self_attn;
  LayerNormWeights ln_cross;
  AttentionWeights cross_attn;
  LayerNormWeights ln_ffn;
  FeedForwardWeights ffn;
};

class ModelParams {
 public:
  ModelConfig config;
  ad::Tensor embedding;  // vocab x d_model
  std::vector<EncoderLayer> encoder;
  LayerNormWeights encoder_norm;
  std::vector<DecoderLayer> decoder;
  LayerNormWeights decoder_norm;
  ad::Tensor output;  // vocab x d_model; same storage as embedding when tied

  /// Every distinct trainable tensor, in a fixed order. A tied output
  /// projection is reported once (as "embedding").
  std::vector<std::pair<std::string, ad::Tensor>> named_parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();
  /// Deep copy with fresh storage (ties preserved).
  ModelParams clone() const;
};

/// Seeded N(0, 0.02) weights, unit LayerNorm gains, zero biases.
ModelParams init_params(const ModelConfig& config);

enum class AttentionKind { kEncoderSelf, kDecoderSelf, kCross };

/// Plain-value copy of one attention sublayer, retained for analysis.
struct AttentionRecord {
  AttentionKind kind = AttentionKind::kDecoderSelf;
  int layer = 0;
  std::size_t heads = 0, queries = 0, keys = 0;
  std::vector<double> weights;  // heads x queries x keys
  // Filled only when decomposition is requested:
  std::vector<double> residual;           // queries x d_model (sublayer input)
  std::vector<double> projected_values;   // heads x keys x d_model (W_o-mapped)

  double weight(std::size_t h, std::size_t q, std::size_t k) const {
    return weights[(h * queries + q) * keys + k];
  }
};

struct ForwardTrace {
  ad::Tensor hidden;  // T x d_model, final layer after the last LayerNorm
  ad::Tensor logits;  // T x vocab
  ad::Tensor atten;   // T x source_len, rows are probability vectors
  std::vector<AttentionRecord> attention;
  std::size_t source_len = 0;
  /// Offset of the first trace row in the model's internal sequence
  /// (0 for encoder-decoder, source_len + 1 for decoder-only).
  std::size_t target_offset = 0;

  std::size_t length() const { return hidden.rows(); }
};

struct ForwardOptions {
  /// Store residuals and W_o-projected values for attribution.
  bool retain_decomposition = false;
};

/// Teacher-forced pass: decoder input is BOS followed by tgt[0..T-2]; row t
/// of the trace predicts tgt[t].
ForwardTrace forward_teacher_forced(const ModelParams& params,
                                    const TokenSeq& src, const TokenSeq& tgt,
                                    const ForwardOptions& options = {});

/// Same computation on an explicit decoder input (must start with BOS).
ForwardTrace forward_prefix(const ModelParams& params, const TokenSeq& src,
                            const TokenSeq& prefix,
                            const ForwardOptions& options = {});

struct StepOutput {
  std::vector<double> logits;
  std::vector<double> hidden;
  std::vector<double> atten;
};

/// Next-token distribution inputs for `prefix` (starting with BOS). Equal to
/// the last row of forward_prefix.
StepOutput forward_step(const ModelParams& params, const TokenSeq& src,
                        const TokenSeq& prefix);

/// Fixed sinusoidal position table, max_len x d_model.
std::vector<double> sinusoidal_positions(int max_len, int d_model);

// Checkpoints: magic line "REPL1", one JSON header line, raw float64 payload.
struct CheckpointExtras {
  std::vector<std::string> vocab;  // id -> token, may be empty
  std::string metadata_json = "{}";
  /// Optimizer state, parameter-aligned; may be empty.
  std::vector<std::vector<double>> momentum;
  std::int64_t step = 0;
};

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const CheckpointExtras& extras = {});
ModelParams load_checkpoint(const std::filesystem::path& path,
                            CheckpointExtras* extras = nullptr);

}  // namespace repsup
