// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "repsup/objectives.h"
#include "test_support.h"

namespace repsup {
namespace {

using testing::random_instance;

// Plain-double reference implementations, written from the loss definitions
// without any of the library's tensor machinery.
double ref_log_softmax(const std::vector<double>& row, std::size_t k) {
  double m = row[0];
  for (double x : row) m = std::max(m, x);
  double s = 0.0;
  for (double x : row) s += std::exp(x - m);
  return row[k] - m - std::log(s);
}

double ref_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return aa == 0 || bb == 0 ? 0.0 : ab / std::sqrt(aa * bb);
}

double ref_ce(const ForwardTrace& tr, const TokenSeq& tgt) {
  double s = 0.0;
  for (std::size_t t = 0; t < tgt.size(); ++t) s -= ref_log_softmax(tr.logits.row_values(t), tgt[t]);
  return s / tgt.size();
}

double ref_contrastive(const ForwardTrace& tr, const TokenSeq& tgt, int n, double temp,
                       bool decay) {
  double total = 0.0;
  for (std::size_t t = 0; t < tgt.size(); ++t) {
    const auto z = tr.logits.row_values(t);
    double inner = 0.0;
    for (std::size_t i = (t > static_cast<std::size_t>(n) ? t - n : 0); i < t; ++i) {
      if (tgt[i] == tgt[t]) continue;
      double w = 1.0;
      if (decay) {
        w = std::exp(-(static_cast<double>(t) - i) / temp) *
            ref_cosine(tr.atten.row_values(i), tr.atten.row_values(t));
      }
      inner += w * std::exp(z[tgt[i]] - z[tgt[t]]);
    }
    total += std::log1p(inner);
  }
  return total / tgt.size();
}

double ref_ul(const ForwardTrace& tr, const TokenSeq& tgt, int n) {
  double total = 0.0;
  for (std::size_t t = 0; t < tgt.size(); ++t) {
    std::set<TokenId> c;
    for (std::size_t i = (t > static_cast<std::size_t>(n) ? t - n : 0); i < t; ++i) {
      if (tgt[i] != tgt[t]) c.insert(tgt[i]);
    }
    const auto row = tr.logits.row_values(t);
    for (auto id : c) total -= std::log(1.0 - std::exp(ref_log_softmax(row, id)));
  }
  return total / tgt.size();
}

TEST(ObjectivesTest, CrossEntropyMatchesReference) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto inst = random_instance(rng, 11, 6, 7, 4);
    const auto tr = inst.trace();
    EXPECT_NEAR(ce_loss(tr, inst.tgt).item(), ref_ce(tr, inst.tgt), 1e-12);
  }
}

TEST(ObjectivesTest, CrossEntropyOfUniformLogitsIsLogV) {
  ForwardTrace tr;
  tr.logits = ad::Tensor::from({3, 7}, std::vector<double>(21, 0.25));
  tr.hidden = ad::Tensor::from({3, 2}, std::vector<double>(6, 1.0));
  EXPECT_NEAR(ce_loss(tr, {5, 6, 5}).item(), std::log(7.0), 1e-14);
}

TEST(ObjectivesTest, ContrastiveTokenMatchesReference) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 30; ++i) {
    const auto inst = random_instance(rng, 11, 6, 9, 5, 2.0);
    const auto tr = inst.trace();
    for (int n : {1, 3, 10}) {
      EXPECT_NEAR(ct_loss(tr, inst.tgt, n).item(), ref_contrastive(tr, inst.tgt, n, 1, false),
                  1e-12);
      for (double temp : {0.5, 5.0}) {
        EXPECT_NEAR(ctsd_loss(tr, inst.tgt, n, temp).item(),
                    ref_contrastive(tr, inst.tgt, n, temp, true), 1e-12);
        EXPECT_NEAR(ctsd_loss(tr, inst.tgt, n, temp, true).item(),
                    ref_contrastive(tr, inst.tgt, n, temp, true), 1e-12);
      }
    }
  }
}

TEST(ObjectivesTest, UnlikelihoodMatchesReference) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 30; ++i) {
    const auto inst = random_instance(rng, 11, 6, 9, 5, 0.7);
    const auto tr = inst.trace();
    EXPECT_NEAR(ul_t_loss(tr, inst.tgt, 4).item(), ref_ul(tr, inst.tgt, 4), 1e-12);
  }
}

// Two positions, logits chosen by hand: y = (5, 6), negative at t=1 is 5.
TEST(ObjectivesTest, ContrastiveTokenHandExample) {
  ForwardTrace tr;
  std::vector<double> logits(2 * 8, 0.0);
  logits[8 + 5] = 1.0;  // row 1: z_5 = 1, z_6 = 0
  tr.logits = ad::Tensor::from({2, 8}, logits);
  tr.hidden = ad::Tensor::from({2, 1}, {1.0, 1.0});
  tr.atten = ad::Tensor::from({2, 2}, {1.0, 0.0, 0.6, 0.8});
  // CT = log(1 + e^1) / 2.
  EXPECT_NEAR(ct_loss(tr, {5, 6}, 10).item(), std::log1p(std::exp(1.0)) / 2, 1e-14);
  // CTSD weight = exp(-1/T) * cos((1,0),(0.6,0.8)) = exp(-1/2) * 0.6.
  EXPECT_NEAR(ctsd_loss(tr, {5, 6}, 10, 2.0).item(),
              std::log1p(std::exp(-0.5) * 0.6 * std::exp(1.0)) / 2, 1e-14);
}

TEST(ObjectivesTest, CtsdReducesToCtForIdenticalAttentionAndLargeTemperature) {
  std::mt19937_64 rng(4);
  auto inst = random_instance(rng, 11, 6, 8, 3, 2.0);
  inst.atten_logits = ad::Tensor::from({8, 3}, std::vector<double>(24, 0.0));
  const auto tr = inst.trace();
  EXPECT_NEAR(ctsd_loss(tr, inst.tgt, 5, 1e12).item(), ct_loss(tr, inst.tgt, 5).item(), 1e-9);
}

TEST(ObjectivesTest, CtsdIsZeroForOrthogonalAttention) {
  ForwardTrace tr;
  tr.logits = ad::Tensor::from({3, 8}, std::vector<double>(24, 0.3));
  tr.hidden = ad::Tensor::from({3, 1}, {1.0, 1.0, 1.0});
  tr.atten = ad::Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_DOUBLE_EQ(ctsd_loss(tr, {5, 6, 7}, 5, 1.0).item(), 0.0);
  EXPECT_GT(ct_loss(tr, {5, 6, 7}, 5).item(), 0.0);
}

TEST(ObjectivesTest, NegativeSetKeepsDuplicatesAndRespectsWindow) {
  const TokenSeq prefix{5, 6, 5, 7, 5, 6};
  auto negs = build_negative_set(prefix, 5, 6, 10, nullptr);
  ASSERT_EQ(negs.size(), 4u);
  EXPECT_EQ(negs[0].t_minus, 0u);
  EXPECT_EQ(negs[0].token_id, 5);
  EXPECT_EQ(negs[3].t_minus, 4u);
  negs = build_negative_set(prefix, 5, 6, 2, nullptr);
  ASSERT_EQ(negs.size(), 2u);
  EXPECT_EQ(negs[0].t_minus, 3u);
  EXPECT_TRUE(build_negative_set(prefix, 0, 6, 10, nullptr).empty());
  EXPECT_TRUE(build_negative_set({5, kPad}, 2, 6, 10, nullptr).size() == 1);
}

TEST(ObjectivesTest, NegativeSetCarriesAttentionRows) {
  ForwardTrace tr;
  tr.atten = ad::Tensor::from({2, 2}, {0.25, 0.75, 0.5, 0.5});
  const auto negs = build_negative_set({5, 6}, 1, 6, 3, &tr);
  ASSERT_EQ(negs.size(), 1u);
  EXPECT_EQ(negs[0].atten_minus, (std::vector<double>{0.25, 0.75}));
}

TEST(ObjectivesTest, AlphaValues) {
  EXPECT_DOUBLE_EQ(alpha_d(2, 5, 3.0), std::exp(-1.0));
  EXPECT_THROW(alpha_d(5, 5, 1.0), InputError);
  EXPECT_THROW(alpha_d(1, 5, 0.0), InputError);
  const std::vector<double> a{1, 0}, b{0, 1}, c{2, 0};
  EXPECT_DOUBLE_EQ(alpha_s(a, b), 0.0);
  EXPECT_DOUBLE_EQ(alpha_s(a, c), 1.0);
  EXPECT_THROW(alpha_s(a, std::vector<double>{1, 2, 3}), InputError);
}

TEST(ObjectivesTest, ClMirroredHandExample) {
  // h = e1, e2, e1: step 3 pairs (1,2) and (2,1); step 2 pairs (1,1).
  ForwardTrace tr;
  tr.hidden = ad::Tensor::from({3, 2}, {1, 0, 0, 1, 1, 0});
  tr.logits = ad::Tensor::from({3, 6}, std::vector<double>(18, 0.0));
  const double rho = 0.5;
  // step 2: relu(cos(h1,h1)-1+rho) = 0.5; step 3: both pairs relu(0-1+0.5)=0.
  EXPECT_NEAR(cl_loss(tr, {5, 5, 5}, rho).item(), (0.5 + 0.0) / 2, 1e-14);
  // current: step 2 pair (1,2): 0; step 3 pairs (1,3): 0.5, (2,3): 0 -> 0.25.
  EXPECT_NEAR(cl_loss(tr, {5, 5, 5}, rho, ClPairing::kCurrent).item(), (0.0 + 0.25) / 2, 1e-14);
}

TEST(ObjectivesTest, PadPositionsAreSkipped) {
  std::mt19937_64 rng(5);
  const auto inst = random_instance(rng, 11, 6, 6, 3);
  const auto tr = inst.trace();
  auto tgt = inst.tgt;
  tgt[5] = kPad;
  std::vector<std::uint8_t> none;
  double expected = 0.0;
  for (std::size_t t = 0; t < 5; ++t) expected -= ref_log_softmax(tr.logits.row_values(t), tgt[t]);
  EXPECT_NEAR(ce_loss(tr, tgt).item(), expected / 5, 1e-12);
  const std::vector<std::uint8_t> mask{0, 0, 0, 0, 1, 1};
  EXPECT_NEAR(ce_loss(tr, inst.tgt, mask).item(),
              [&] {
                double s = 0;
                for (std::size_t t = 0; t < 4; ++t) s -= ref_log_softmax(tr.logits.row_values(t), inst.tgt[t]);
                return s / 4;
              }(),
              1e-12);
  EXPECT_THROW(ce_loss(tr, TokenSeq(6, kPad)), InputError);
}

TEST(ObjectivesTest, TotalLossCombinesCeAndWeightedAux) {
  std::mt19937_64 rng(6);
  const auto inst = random_instance(rng, 11, 6, 8, 3, 2.0);
  const auto tr = inst.trace();
  LossConfig cfg;
  cfg.kind = LossKind::kCTSD;
  cfg.weight = 0.7;
  const auto parts = total_loss(tr, inst.tgt, cfg);
  EXPECT_NEAR(parts.total.item(), parts.ce.item() + 0.7 * parts.aux.item(), 1e-14);
  cfg.weight = 0.0;
  const auto ce_only = total_loss(tr, inst.tgt, cfg);
  EXPECT_EQ(ce_only.total.item(), ce_only.ce.item());
  cfg.kind = LossKind::kCE;
  EXPECT_EQ(total_loss(tr, inst.tgt, cfg).aux.item(), 0.0);
}

TEST(ObjectivesTest, LossConfigValidation) {
  LossConfig cfg;
  cfg.window = 0;
  try {
    cfg.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "loss.N");
  }
  cfg = LossConfig{};
  cfg.temperature = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = LossConfig{};
  cfg.weight = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(parse_loss_kind("XYZ"), ConfigError);
  for (auto k : {LossKind::kCE, LossKind::kUnlikelihood, LossKind::kContrastiveLearning,
                 LossKind::kContrastiveToken, LossKind::kCTSD}) {
    EXPECT_EQ(parse_loss_kind(to_string(k)), k);
  }
}

TEST(ObjectivesTest, ModelPrefixNegativesUseArgmaxPredictions) {
  ForwardTrace tr;
  std::vector<double> logits(3 * 8, 0.0);
  logits[0 * 8 + 7] = 3.0;  // predicted 7 at row 0
  logits[1 * 8 + 7] = 3.0;
  tr.logits = ad::Tensor::from({3, 8}, logits);
  tr.hidden = ad::Tensor::from({3, 1}, {1, 1, 1});
  const TokenSeq tgt{5, 5, 6};
  // Gold prefix: at t=2 negatives are 5,5 -> z_5 - z_6 = 0 -> log(1+2)/3.
  EXPECT_NEAR(ct_loss(tr, tgt, 5).item(), std::log(3.0) / 3, 1e-14);
  // Model prefix: t=1 negative 7 (z_7-z_5 = 3); t=2 negatives 7,7 (0-0 with row 2 flat).
  const double expected = (std::log1p(std::exp(3.0)) + std::log(3.0)) / 3;
  EXPECT_NEAR(ct_loss(tr, tgt, 5, NegativeSource::kModelPrefix).item(), expected, 1e-14);
}

TEST(ObjectivesTest, LengthMismatchThrows) {
  std::mt19937_64 rng(7);
  const auto inst = random_instance(rng, 11, 6, 4, 3);
  const auto tr = inst.trace();
  EXPECT_THROW(ce_loss(tr, {5, 6}), InputError);
  EXPECT_THROW(ct_loss(tr, {5, 6}, 3), InputError);
}

TEST(ObjectivesTest, CtsdGradientsHaveNoNaNForLargeLogits) {
  std::mt19937_64 rng(8);
  auto inst = random_instance(rng, 11, 6, 8, 3, 40.0);
  const auto tr = inst.trace();
  const auto loss = ctsd_loss(tr, inst.tgt, 5, 5.0);
  EXPECT_TRUE(std::isfinite(loss.item()));
  loss.backward();
  for (const auto& leaf : inst.leaves()) {
    for (double g : leaf.grad()) EXPECT_TRUE(std::isfinite(g));
  }
}

TEST(ObjectivesTest, AuxiliaryLossesAreNonNegative) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    const auto inst = random_instance(rng, 11, 6, 9, 4, 1.5);
    const auto tr = inst.trace();
    EXPECT_GE(ul_t_loss(tr, inst.tgt, 4).item(), 0.0);
    EXPECT_GE(cl_loss(tr, inst.tgt, 0.5).item(), 0.0);
    EXPECT_GE(ct_loss(tr, inst.tgt, 4).item(), 0.0);
    EXPECT_GE(ctsd_loss(tr, inst.tgt, 4, 5.0).item(), 0.0);
  }
}

// Rows of a trace, as a trace of their own.
ForwardTrace head_rows(const ForwardTrace& tr, std::size_t n) {
  ForwardTrace out;
  out.hidden = ad::slice_rows(tr.hidden, 0, n);
  out.logits = ad::slice_rows(tr.logits, 0, n);
  out.atten = ad::slice_rows(tr.atten, 0, n);
  out.source_len = tr.source_len;
  return out;
}

// Changing y_0 may only move the terms of positions 0..N, so the change in the
// summed loss equals the change over the first N+1 rows alone.
TEST(ObjectivesTest, TokensOutsideTheWindowHaveNoInfluence) {
  constexpr int kWindow = 3;
  constexpr std::size_t kLen = 12, kHead = kWindow + 1;
  std::mt19937_64 rng(10);
  for (int i = 0; i < 20; ++i) {
    const auto inst = random_instance(rng, 11, 6, kLen, 4);
    const auto tr = inst.trace();
    const auto head = head_rows(tr, kHead);
    TokenSeq a = inst.tgt, b = inst.tgt;
    b[0] = a[0] == 9 ? 10 : 9;
    const TokenSeq a_head(a.begin(), a.begin() + kHead), b_head(b.begin(), b.begin() + kHead);
    for (bool decay : {false, true}) {
      const auto summed = [&](const ForwardTrace& t, const TokenSeq& y) {
        const double v = decay ? ctsd_loss(t, y, kWindow, 5.0).item() : ct_loss(t, y, kWindow).item();
        return v * static_cast<double>(y.size());
      };
      EXPECT_NEAR(summed(tr, b) - summed(tr, a), summed(head, b_head) - summed(head, a_head),
                  1e-12);
    }
  }
}

// One gradient step lowers z_neg - z_pos at the position holding the negative.
TEST(ObjectivesTest, GradientStepSuppressesTheNegative) {
  for (bool decay : {false, true}) {
    std::mt19937_64 rng(11);
    auto inst = random_instance(rng, 8, 4, 2, 2);
    inst.tgt = {5, 6};
    const auto margin = [&] {
      const auto z = inst.trace().logits.row_values(1);
      return z[5] - z[6];
    };
    const double before = margin();
    const auto tr = inst.trace();
    (decay ? ctsd_loss(tr, inst.tgt, 5, 5.0) : ct_loss(tr, inst.tgt, 5)).backward();
    for (auto& leaf : inst.leaves()) {
      const std::vector<double> g(leaf.grad().begin(), leaf.grad().end());
      auto v = leaf.mutable_values();
      for (std::size_t k = 0; k < v.size(); ++k) v[k] -= 1e-3 * g[k];
    }
    EXPECT_LT(margin(), before) << (decay ? "CTSD" : "CT");
  }
}

}  // namespace
}  // namespace repsup
