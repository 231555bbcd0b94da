// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0
//
// Analysis instruments over a forward pass:
//  * ALTI-style (simplified) contribution matrices. Each attention sublayer's
//    output at query t is split into per-key summands (attention weight times
//    the W_o-mapped value) plus the residual stream, which counts as the
//    query's own contribution. A summand's raw share is
//    max(0, |o_t|_1 - |o_t - summand|_1); rows are normalised and the
//    per-sublayer matrices are composed from the first layer to the last.
//  * cosine similarity of adjacent final-layer hidden states;
//  * the attention-similarity and distance-decay matrices that weight CTSD.

#pragma once

#include <string>
#include <vector>

#include "repsup/common.h"
#include "repsup/model.h"

namespace repsup {

struct DenseMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}
  static DenseMatrix identity(std::size_t n);

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// a * b.
DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b);
/// Rows with a positive sum are scaled to sum 1; all-zero rows become the
/// unit vector on the diagonal (square matrices) or stay zero.
void normalize_rows(DenseMatrix& m);
/// layers[L-1] * ... * layers[0].
DenseMatrix rollout(const std::vector<DenseMatrix>& layers);

/// Per-sublayer shares, rows normalised jointly over keys and the residual.
struct SublayerContribution {
  DenseMatrix to_keys;              // queries x keys
  std::vector<double> to_residual;  // one per query
};

/// Requires a record produced with retain_decomposition. When
/// `residual_is_key` is set (self-attention over the same positions) the
/// residual summand is merged into key t and to_residual stays zero.
SublayerContribution sublayer_contributions(const AttentionRecord& record,
                                            std::size_t d_model, bool residual_is_key);

struct ContributionMatrix {
  std::string method = "ALTI-style (simplified)";
  std::vector<std::string> row_labels;  // generated tokens
  std::vector<std::string> col_labels;  // source tokens, then decoder inputs
  DenseMatrix values;
};

/// Attribution from a trace carrying decomposition records.
ContributionMatrix contribution_matrix(const ForwardTrace& trace, const ModelConfig& config,
                                       const TokenSeq& src, const TokenSeq& tgt,
                                       const std::vector<std::string>& id_to_token = {});

/// Runs the teacher-forced pass itself.
ContributionMatrix contribution_matrix(const ModelParams& params, const TokenSeq& src,
                                       const TokenSeq& tgt,
                                       const std::vector<std::string>& id_to_token = {});

struct AdjacentSimilarity {
  std::vector<double> cosine;  // cosine[t] = cos(h_t, h_{t+1})
  double same_token_mean = 0.0;
  double different_token_mean = 0.0;
  std::size_t same_token_pairs = 0;
  std::size_t different_token_pairs = 0;
};

/// `trace` is a teacher-forced pass over `tgt`. Each row is labelled with the
/// token it reads (BOS, tgt[0], ..., tgt[n-2]), so a same-token pair is two
/// adjacent positions fed the same token.
AdjacentSimilarity adjacent_similarity(const ForwardTrace& trace, const TokenSeq& tgt);
/// `tokens[t]` labels hidden[t].
AdjacentSimilarity adjacent_similarity(const std::vector<std::vector<double>>& hidden,
                                       const TokenSeq& tokens);

struct AttenuationMatrices {
  DenseMatrix similarity;  // alpha_s between attention rows
  DenseMatrix decay;       // exp(-|i - j| / T)
};

AttenuationMatrices attenuation_matrices(const ForwardTrace& trace, double temperature);
AttenuationMatrices attenuation_matrices(const std::vector<std::vector<double>>& atten,
                                         double temperature);

/// Projection of the rows onto their two leading principal components
/// (n x 2). Component signs are fixed so the largest loading is positive.
DenseMatrix pca_2d(const std::vector<std::vector<double>>& rows);

}  // namespace repsup
