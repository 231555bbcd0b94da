// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training objectives over a teacher-forced ForwardTrace.
//
// Positions are 0-based: trace row t predicts tgt[t], and the negative window
// at t covers rows max(0, t - N) .. t - 1. Target positions holding PAD are
// skipped by every objective. All auxiliary losses are averaged over the
// non-pad positions of the sequence.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "repsup/common.h"
#include "repsup/model.h"
#include "repsup/tensor.h"

namespace repsup {

enum class LossKind { kCE, kUnlikelihood, kContrastiveLearning, kContrastiveToken, kCTSD };

/// How the contrastive-learning term pairs hidden states at step t.
/// kMirrored follows s(h_i, h_{t-i}); kCurrent compares h_i with h_t.
enum class ClPairing { kMirrored, kCurrent };

/// Where negative tokens come from: the gold prefix, or the model's own
/// argmax predictions at earlier teacher-forced positions.
enum class NegativeSource { kGoldPrefix, kModelPrefix };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);
std::string to_string(ClPairing pairing);
ClPairing parse_cl_pairing(const std::string& name);
std::string to_string(NegativeSource source);
NegativeSource parse_negative_source(const std::string& name);

struct LossConfig {
  LossKind kind = LossKind::kCE;
  int window = 10;           // N
  double temperature = 5.0;  // T, decay temperature of alpha_d
  double weight = 1.0;       // W, total = CE + W * aux
  double rho = 0.5;          // contrastive-learning margin
  ClPairing cl_pairing = ClPairing::kMirrored;
  NegativeSource negatives = NegativeSource::kGoldPrefix;
  /// Treat alpha_s as a constant instead of differentiating through attention.
  bool stop_alpha_s_gradient = false;

  void validate() const;
};

struct NegativeOccurrence {
  TokenId token_id = 0;
  std::size_t t_minus = 0;
  std::vector<double> atten_minus;
};

/// Occurrences in prefix[max(0, t-N) .. t-1] whose token differs from y_t.
/// Duplicates are kept as separate occurrences. PAD never counts.
/// `trace` may be null, in which case atten_minus is left empty.
std::vector<NegativeOccurrence> build_negative_set(const TokenSeq& prefix,
                                                   std::size_t t, TokenId y_t,
                                                   int window,
                                                   const ForwardTrace* trace);

/// exp((t_minus - t) / T). Requires t_minus < t and T > 0.
double alpha_d(std::size_t t_minus, std::size_t t, double temperature);

/// Cosine similarity of two attention rows (0 if either is all-zero).
double alpha_s(std::span<const double> atten_minus, std::span<const double> atten_t);

ad::Tensor ce_loss(const ForwardTrace& trace, const TokenSeq& tgt,
                   std::span<const std::uint8_t> pad_mask = {});
ad::Tensor ul_t_loss(const ForwardTrace& trace, const TokenSeq& tgt, int window,
                     NegativeSource negatives = NegativeSource::kGoldPrefix);
ad::Tensor cl_loss(const ForwardTrace& trace, const TokenSeq& tgt, double rho,
                   ClPairing pairing = ClPairing::kMirrored);
ad::Tensor ct_loss(const ForwardTrace& trace, const TokenSeq& tgt, int window,
                   NegativeSource negatives = NegativeSource::kGoldPrefix);
ad::Tensor ctsd_loss(const ForwardTrace& trace, const TokenSeq& tgt, int window,
                     double temperature, bool stop_alpha_s_gradient = false,
                     NegativeSource negatives = NegativeSource::kGoldPrefix);

/// The auxiliary objective selected by cfg.kind (zero for CE).
ad::Tensor aux_loss(const ForwardTrace& trace, const TokenSeq& tgt,
                    const LossConfig& cfg);

struct LossBreakdown {
  ad::Tensor total;
  ad::Tensor ce;
  ad::Tensor aux;  // unweighted; a zero scalar for CE
};

/// CE for kind CE, otherwise CE + W * aux. W = 0 returns the CE tensor itself.
LossBreakdown total_loss(const ForwardTrace& trace, const TokenSeq& tgt,
                         const LossConfig& cfg);

}  // namespace repsup
