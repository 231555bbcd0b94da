// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0

#include "repsup/objectives.h"

#include <algorithm>
#include <cmath>
#include <set>

namespace repsup {

namespace {

using ad::Tensor;
using Index = std::pair<std::size_t, std::size_t>;

constexpr double kUnlikelihoodFloor = 1e-9;

void check_lengths(const ForwardTrace& trace, const TokenSeq& tgt) {
  if (!trace.logits.defined() || trace.length() != tgt.size() ||
      trace.logits.rows() != tgt.size()) {
    throw InputError("trace length " +
                     std::to_string(trace.logits.defined() ? trace.length() : 0) +
                     " does not match target length " + std::to_string(tgt.size()));
  }
}

std::vector<bool> pad_positions(const TokenSeq& tgt,
                                std::span<const std::uint8_t> pad_mask = {}) {
  if (!pad_mask.empty() && pad_mask.size() != tgt.size()) {
    throw InputError("pad mask length does not match target length");
  }
  std::vector<bool> pad(tgt.size());
  for (std::size_t t = 0; t < tgt.size(); ++t) {
    pad[t] = tgt[t] == kPad || (!pad_mask.empty() && pad_mask[t] != 0);
  }
  return pad;
}

std::size_t count_active(const std::vector<bool>& pad) {
  return static_cast<std::size_t>(std::count(pad.begin(), pad.end(), false));
}

Tensor zero_scalar() { return Tensor::scalar(0.0); }

// The token sequence negatives are drawn from.
TokenSeq negative_prefix(const ForwardTrace& trace, const TokenSeq& tgt,
                         NegativeSource source) {
  if (source == NegativeSource::kGoldPrefix) return tgt;
  TokenSeq predicted(tgt.size());
  const std::size_t v = trace.logits.cols();
  const auto logits = trace.logits.values();
  for (std::size_t t = 0; t < tgt.size(); ++t) {
    const auto* row = logits.data() + t * v;
    predicted[t] = static_cast<TokenId>(std::max_element(row, row + v) - row);
  }
  return predicted;
}

// log(1 + sum_k w_k exp(z_k)) per position group, summed over positions.
// `group[k]` is the position index (0..groups-1) of occurrence k. The per-group
// shift m_g = max(0, max z) is a constant; it cancels analytically, so
// gradients are exact.
Tensor grouped_log1p_sum_exp(const Tensor& z, const Tensor* weights,
                             const std::vector<std::size_t>& group,
                             std::size_t groups) {
  const auto zv = z.values();
  std::vector<double> shift(groups, 0.0);
  for (std::size_t k = 0; k < group.size(); ++k) {
    shift[group[k]] = std::max(shift[group[k]], zv[k]);
  }
  std::vector<double> per_occurrence(group.size());
  for (std::size_t k = 0; k < group.size(); ++k) per_occurrence[k] = shift[group[k]];

  Tensor e = ad::exp(ad::sub(z, Tensor::row(per_occurrence)));
  if (weights != nullptr) e = ad::mul(e, *weights);

  std::vector<double> indicator(group.size() * groups, 0.0);
  for (std::size_t k = 0; k < group.size(); ++k) indicator[k * groups + group[k]] = 1.0;
  const Tensor sums =
      ad::matmul(e, Tensor::from({group.size(), groups}, std::move(indicator)));

  std::vector<double> offset(groups);
  for (std::size_t g = 0; g < groups; ++g) offset[g] = std::exp(-shift[g]);
  const Tensor inner = ad::add(sums, Tensor::row(offset));
  return ad::sum(ad::add(ad::log(inner), Tensor::row(shift)));
}

struct Occurrences {
  std::vector<Index> negative;   // (t, y^-)
  std::vector<Index> positive;   // (t, y_t), aligned with negative
  std::vector<std::size_t> t_minus;
  std::vector<std::size_t> group;  // compact position index
  std::size_t groups = 0;
};

Occurrences collect(const ForwardTrace& trace, const TokenSeq& tgt, int window,
                    NegativeSource source, const std::vector<bool>& pad) {
  const TokenSeq prefix = negative_prefix(trace, tgt, source);
  Occurrences occ;
  for (std::size_t t = 0; t < tgt.size(); ++t) {
    if (pad[t]) continue;
    const auto negs = build_negative_set(prefix, t, tgt[t], window, nullptr);
    for (const auto& n : negs) {
      occ.negative.emplace_back(t, static_cast<std::size_t>(n.token_id));
      occ.positive.emplace_back(t, static_cast<std::size_t>(tgt[t]));
      occ.t_minus.push_back(n.t_minus);
      occ.group.push_back(occ.groups);
    }
    ++occ.groups;
  }
  return occ;
}

Tensor contrastive_token(const ForwardTrace& trace, const TokenSeq& tgt,
                         int window, NegativeSource source, bool decay,
                         double temperature, bool stop_alpha_s_gradient) {
  check_lengths(trace, tgt);
  if (window < 1) throw ConfigError("loss.window", "must be >= 1");
  const auto pad = pad_positions(tgt);
  const std::size_t active = count_active(pad);
  if (active == 0) throw InputError("all target positions are padding");
  if (decay && (!trace.atten.defined() || trace.atten.rows() != tgt.size())) {
    throw InputError("CTSD needs one attention row per target position");
  }

  const Occurrences occ = collect(trace, tgt, window, source, pad);
  if (occ.negative.empty()) return zero_scalar();

  const Tensor z = ad::sub(ad::gather(trace.logits, occ.negative),
                           ad::gather(trace.logits, occ.positive));
  Tensor total;
  if (!decay) {
    total = grouped_log1p_sum_exp(z, nullptr, occ.group, occ.groups);
  } else {
    std::vector<double> decay_weights(occ.negative.size());
    std::vector<Tensor> rows(tgt.size());
    const auto row = [&](std::size_t r) -> const Tensor& {
      if (!rows[r].defined()) rows[r] = ad::slice_rows(trace.atten, r, r + 1);
      return rows[r];
    };
    std::vector<Tensor> similarity;
    std::vector<double> similarity_values;
    similarity.reserve(occ.negative.size());
    for (std::size_t k = 0; k < occ.negative.size(); ++k) {
      const std::size_t t = occ.negative[k].first;
      decay_weights[k] = alpha_d(occ.t_minus[k], t, temperature);
      if (stop_alpha_s_gradient) {
        similarity_values.push_back(
            alpha_s(row(occ.t_minus[k]).values(), row(t).values()));
      } else {
        similarity.push_back(ad::cosine(row(occ.t_minus[k]), row(t)));
      }
    }
    Tensor weights = stop_alpha_s_gradient
                         ? Tensor::row(std::move(similarity_values))
                         : ad::concat_cols(similarity);
    weights = ad::mul(weights, Tensor::row(std::move(decay_weights)));
    total = grouped_log1p_sum_exp(z, &weights, occ.group, occ.groups);
  }
  return ad::scale(total, 1.0 / static_cast<double>(active));
}

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kCE: return "CE";
    case LossKind::kUnlikelihood: return "UL-T";
    case LossKind::kContrastiveLearning: return "CL";
    case LossKind::kContrastiveToken: return "CT";
    case LossKind::kCTSD: return "CTSD";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "CE") return LossKind::kCE;
  if (name == "UL-T" || name == "UL_T") return LossKind::kUnlikelihood;
  if (name == "CL") return LossKind::kContrastiveLearning;
  if (name == "CT") return LossKind::kContrastiveToken;
  if (name == "CTSD") return LossKind::kCTSD;
  throw ConfigError("loss.kind", "unknown loss kind '" + name + "'");
}

std::string to_string(ClPairing pairing) {
  return pairing == ClPairing::kMirrored ? "mirrored" : "current";
}

ClPairing parse_cl_pairing(const std::string& name) {
  if (name == "mirrored") return ClPairing::kMirrored;
  if (name == "current") return ClPairing::kCurrent;
  throw ConfigError("loss.cl_pairing", "unknown pairing '" + name + "'");
}

std::string to_string(NegativeSource source) {
  return source == NegativeSource::kGoldPrefix ? "gold_prefix" : "model_prefix";
}

NegativeSource parse_negative_source(const std::string& name) {
  if (name == "gold_prefix") return NegativeSource::kGoldPrefix;
  if (name == "model_prefix") return NegativeSource::kModelPrefix;
  throw ConfigError("loss.negatives", "unknown negative source '" + name + "'");
}

void LossConfig::validate() const {
  if (window < 1) throw ConfigError("loss.N", "must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("loss.T", "must be > 0");
  if (!(weight >= 0.0)) throw ConfigError("loss.W", "must be >= 0");
  if (!(rho >= -1.0 && rho <= 1.0)) throw ConfigError("loss.rho", "must lie in [-1, 1]");
}

std::vector<NegativeOccurrence> build_negative_set(const TokenSeq& prefix,
                                                   std::size_t t, TokenId y_t,
                                                   int window,
                                                   const ForwardTrace* trace) {
  std::vector<NegativeOccurrence> out;
  if (t == 0 || window < 1) return out;
  const std::size_t n = static_cast<std::size_t>(window);
  const std::size_t begin = t > n ? t - n : 0;
  const std::size_t end = std::min(t, prefix.size());
  for (std::size_t i = begin; i < end; ++i) {
    if (prefix[i] == y_t || prefix[i] == kPad) continue;
    NegativeOccurrence occ;
    occ.token_id = prefix[i];
    occ.t_minus = i;
    if (trace != nullptr && trace->atten.defined() && i < trace->atten.rows()) {
      occ.atten_minus = trace->atten.row_values(i);
    }
    out.push_back(std::move(occ));
  }
  return out;
}

double alpha_d(std::size_t t_minus, std::size_t t, double temperature) {
  if (t_minus >= t) throw InputError("alpha_d requires t_minus < t");
  if (!(temperature > 0.0)) throw InputError("alpha_d requires T > 0");
  return std::exp((static_cast<double>(t_minus) - static_cast<double>(t)) / temperature);
}

double alpha_s(std::span<const double> atten_minus, std::span<const double> atten_t) {
  if (atten_minus.size() != atten_t.size()) {
    throw InputError("alpha_s: attention rows differ in length (" +
                     std::to_string(atten_minus.size()) + " vs " +
                     std::to_string(atten_t.size()) + ")");
  }
  return ad::cosine(atten_minus, atten_t);
}

Tensor ce_loss(const ForwardTrace& trace, const TokenSeq& tgt,
               std::span<const std::uint8_t> pad_mask) {
  check_lengths(trace, tgt);
  const auto pad = pad_positions(tgt, pad_mask);
  std::vector<Index> picks;
  for (std::size_t t = 0; t < tgt.size(); ++t) {
    if (!pad[t]) picks.emplace_back(t, static_cast<std::size_t>(tgt[t]));
  }
  if (picks.empty()) throw InputError("all target positions are padding");
  return ad::scale(ad::mean(ad::gather(ad::log_softmax_rows(trace.logits), picks)),
                   -1.0);
}

Tensor ul_t_loss(const ForwardTrace& trace, const TokenSeq& tgt, int window,
                 NegativeSource negatives) {
  check_lengths(trace, tgt);
  const auto pad = pad_positions(tgt);
  const std::size_t active = count_active(pad);
  if (active == 0) throw InputError("all target positions are padding");
  const TokenSeq prefix = negative_prefix(trace, tgt, negatives);

  // Unlikelihood penalises each candidate token once per step.
  std::vector<Index> picks;
  for (std::size_t t = 0; t < tgt.size(); ++t) {
    if (pad[t]) continue;
    std::set<TokenId> candidates;
    for (const auto& n : build_negative_set(prefix, t, tgt[t], window, nullptr)) {
      candidates.insert(n.token_id);
    }
    for (auto id : candidates) picks.emplace_back(t, static_cast<std::size_t>(id));
  }
  if (picks.empty()) return zero_scalar();

  const Tensor p = ad::gather(ad::softmax_rows(trace.logits), picks);
  const Tensor complement =
      ad::clamp_min(ad::add_scalar(ad::scale(p, -1.0), 1.0), kUnlikelihoodFloor);
  return ad::scale(ad::sum(ad::log(complement)), -1.0 / static_cast<double>(active));
}

Tensor cl_loss(const ForwardTrace& trace, const TokenSeq& tgt, double rho,
               ClPairing pairing) {
  check_lengths(trace, tgt);
  const auto pad = pad_positions(tgt);
  std::vector<std::size_t> positions;
  for (std::size_t t = 0; t < tgt.size(); ++t) {
    if (!pad[t]) positions.push_back(t);
  }
  if (positions.size() < 2) return zero_scalar();

  std::vector<Tensor> h(positions.size());
  for (std::size_t k = 0; k < positions.size(); ++k) {
    h[k] = ad::slice_rows(trace.hidden, positions[k], positions[k] + 1);
  }

  // 1-based step t = 2..n; i = 1..t-1 pairs with t-i (mirrored) or t.
  std::vector<Tensor> per_step;
  for (std::size_t t = 2; t <= positions.size(); ++t) {
    std::vector<Tensor> hinges;
    for (std::size_t i = 1; i < t; ++i) {
      const std::size_t j = pairing == ClPairing::kMirrored ? t - i : t;
      const Tensor self_sim = ad::cosine(h[i - 1], h[i - 1]);
      const Tensor cross_sim = ad::cosine(h[i - 1], h[j - 1]);
      hinges.push_back(
          ad::relu(ad::add_scalar(ad::sub(cross_sim, self_sim), rho)));
    }
    per_step.push_back(ad::mean(ad::concat_cols(hinges)));
  }
  return ad::mean(ad::concat_cols(per_step));
}

Tensor ct_loss(const ForwardTrace& trace, const TokenSeq& tgt, int window,
               NegativeSource negatives) {
  return contrastive_token(trace, tgt, window, negatives, false, 1.0, false);
}

Tensor ctsd_loss(const ForwardTrace& trace, const TokenSeq& tgt, int window,
                 double temperature, bool stop_alpha_s_gradient,
                 NegativeSource negatives) {
  if (!(temperature > 0.0)) throw ConfigError("loss.T", "must be > 0");
  return contrastive_token(trace, tgt, window, negatives, true, temperature,
                           stop_alpha_s_gradient);
}

Tensor aux_loss(const ForwardTrace& trace, const TokenSeq& tgt, const LossConfig& cfg) {
  switch (cfg.kind) {
    case LossKind::kCE:
      return zero_scalar();
    case LossKind::kUnlikelihood:
      return ul_t_loss(trace, tgt, cfg.window, cfg.negatives);
    case LossKind::kContrastiveLearning:
      return cl_loss(trace, tgt, cfg.rho, cfg.cl_pairing);
    case LossKind::kContrastiveToken:
      return ct_loss(trace, tgt, cfg.window, cfg.negatives);
    case LossKind::kCTSD:
      return ctsd_loss(trace, tgt, cfg.window, cfg.temperature,
                       cfg.stop_alpha_s_gradient, cfg.negatives);
  }
  return zero_scalar();
}

LossBreakdown total_loss(const ForwardTrace& trace, const TokenSeq& tgt,
                         const LossConfig& cfg) {
  cfg.validate();
  LossBreakdown out;
  out.ce = ce_loss(trace, tgt);
  out.aux = aux_loss(trace, tgt, cfg);
  if (cfg.kind == LossKind::kCE || cfg.weight == 0.0) {
    out.total = out.ce;
  } else {
    out.total = ad::add(out.ce, ad::scale(out.aux, cfg.weight));
  }
  return out;
}

}  // namespace repsup
