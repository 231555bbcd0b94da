// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "repsup/model.h"
#include "test_support.h"

namespace repsup {
namespace {

using testing::random_tokens;
using testing::tiny_config;

std::vector<double> flat(const ad::Tensor& t) { return {t.values().begin(), t.values().end()}; }

class ModelArchTest : public ::testing::TestWithParam<Arch> {};

TEST_P(ModelArchTest, SameSeedGivesIdenticalParameters) {
  const auto a = init_params(tiny_config(GetParam(), 11));
  const auto b = init_params(tiny_config(GetParam(), 11));
  const auto c = init_params(tiny_config(GetParam(), 12));
  const auto na = a.named_parameters(), nb = b.named_parameters(), nc = c.named_parameters();
  ASSERT_EQ(na.size(), nb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < na.size(); ++i) {
    EXPECT_EQ(na[i].first, nb[i].first);
    EXPECT_EQ(flat(na[i].second), flat(nb[i].second));
    any_diff = any_diff || flat(na[i].second) != flat(nc[i].second);
  }
  EXPECT_TRUE(any_diff);
}

TEST_P(ModelArchTest, TiedOutputSharesEmbeddingStorage) {
  const auto p = init_params(tiny_config(GetParam(), 1));
  EXPECT_TRUE(p.output.same_storage(p.embedding));
  auto cfg = tiny_config(GetParam(), 1);
  cfg.tie_output_embedding = false;
  const auto q = init_params(cfg);
  EXPECT_FALSE(q.output.same_storage(q.embedding));
  // logits = h W_out^T with W_out the embedding table.
  std::mt19937_64 rng(3);
  const auto src = random_tokens(rng, 4, p.config.vocab_size);
  auto tgt = random_tokens(rng, 3, p.config.vocab_size);
  const auto trace = forward_teacher_forced(p, src, tgt);
  const auto expected = ad::matmul(trace.hidden, ad::transpose(p.embedding));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(trace.logits.values()[i], expected.values()[i]);
  }
}

TEST_P(ModelArchTest, CausalityPerturbingLaterTargetsLeavesEarlierRowsUnchanged) {
  const auto p = init_params(tiny_config(GetParam(), 5));
  std::mt19937_64 rng(9);
  const auto src = random_tokens(rng, 5, p.config.vocab_size);
  auto tgt = random_tokens(rng, 6, p.config.vocab_size);
  const auto base = forward_teacher_forced(p, src, tgt);
  for (std::size_t t = 0; t < tgt.size(); ++t) {
    auto changed = tgt;
    changed[t] = changed[t] == 5 ? 6 : 5;
    const auto other = forward_teacher_forced(p, src, changed);
    // Row r sees tgt[0..r-1], so rows <= t are unaffected by tgt[t].
    for (std::size_t r = 0; r <= t; ++r) {
      EXPECT_EQ(base.logits.row_values(r), other.logits.row_values(r)) << "t=" << t;
    }
  }
}

TEST_P(ModelArchTest, AttentionRowsAreDistributionsOverSource) {
  const auto p = init_params(tiny_config(GetParam(), 2));
  std::mt19937_64 rng(4);
  const auto src = random_tokens(rng, 6, p.config.vocab_size);
  const auto tgt = random_tokens(rng, 5, p.config.vocab_size);
  const auto trace = forward_teacher_forced(p, src, tgt);
  EXPECT_EQ(trace.hidden.rows(), tgt.size());
  EXPECT_EQ(trace.logits.rows(), tgt.size());
  ASSERT_EQ(trace.atten.cols(), src.size());
  for (std::size_t r = 0; r < trace.atten.rows(); ++r) {
    double s = 0.0;
    for (double x : trace.atten.row_values(r)) {
      EXPECT_GE(x, 0.0);
      s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  for (const auto& rec : trace.attention) {
    for (std::size_t h = 0; h < rec.heads; ++h) {
      for (std::size_t q = 0; q < rec.queries; ++q) {
        double s = 0.0;
        for (std::size_t k = 0; k < rec.keys; ++k) s += rec.weight(h, q, k);
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
    }
  }
}

TEST_P(ModelArchTest, ForwardStepMatchesLastRowOfBatchedPass) {
  const auto p = init_params(tiny_config(GetParam(), 8));
  std::mt19937_64 rng(21);
  const auto src = random_tokens(rng, 4, p.config.vocab_size);
  TokenSeq prefix{kBos};
  for (int step = 0; step < 5; ++step) {
    const auto trace = forward_prefix(p, src, prefix);
    const auto out = forward_step(p, src, prefix);
    const auto last = trace.length() - 1;
    const auto logits = trace.logits.row_values(last);
    const auto hidden = trace.hidden.row_values(last);
    for (std::size_t i = 0; i < logits.size(); ++i) EXPECT_NEAR(out.logits[i], logits[i], 1e-10);
    for (std::size_t i = 0; i < hidden.size(); ++i) EXPECT_NEAR(out.hidden[i], hidden[i], 1e-10);
    EXPECT_EQ(out.logits, forward_step(p, src, prefix).logits);
    prefix.push_back(random_tokens(rng, 1, p.config.vocab_size)[0]);
  }
}

TEST_P(ModelArchTest, BosOnlyPrefixDependsOnlyOnSource) {
  const auto p = init_params(tiny_config(GetParam(), 3));
  const TokenSeq src{5, 6, 7};
  const auto a = forward_step(p, src, {kBos});
  const auto b = forward_step(p, src, {kBos});
  EXPECT_EQ(a.logits, b.logits);
  const auto c = forward_step(p, {5, 6, 8}, {kBos});
  EXPECT_NE(a.logits, c.logits);
}

TEST_P(ModelArchTest, InputValidation) {
  const auto p = init_params(tiny_config(GetParam(), 3));
  EXPECT_THROW(forward_teacher_forced(p, {}, {5}), InputError);
  EXPECT_THROW(forward_teacher_forced(p, {5}, {}), InputError);
  EXPECT_THROW(forward_teacher_forced(p, {5, 13}, {5}), InputError);
  EXPECT_THROW(forward_prefix(p, {5}, {5, 6}), InputError);
  const TokenSeq too_long(40, 5);
  EXPECT_THROW(forward_teacher_forced(p, too_long, {5}), InputError);
}

TEST_P(ModelArchTest, GradientsReachEveryParameter) {
  auto cfg = tiny_config(GetParam(), 4);
  cfg.tie_output_embedding = false;
  const auto p = init_params(cfg);
  std::mt19937_64 rng(2);
  const auto src = random_tokens(rng, 4, cfg.vocab_size);
  const auto tgt = random_tokens(rng, 4, cfg.vocab_size);
  const auto trace = forward_teacher_forced(p, src, tgt);
  ad::sum(ad::add(ad::sum(trace.logits), ad::sum(ad::mul(trace.atten, trace.atten)))).backward();
  for (const auto& [name, t] : p.named_parameters()) {
    double norm = 0.0;
    for (double g : t.grad()) norm += g * g;
    EXPECT_GT(norm, 0.0) << name;
  }
}

TEST_P(ModelArchTest, CheckpointRoundTrip) {
  auto cfg = tiny_config(GetParam(), 6);
  cfg.attn_source = AttnSource::kMeanAllLayers;
  cfg.n_layers = 2;
  const auto p = init_params(cfg);
  const auto path = std::filesystem::temp_directory_path() /
                    ("repsup_ckpt_" + to_string(GetParam()) + ".ckpt");
  CheckpointExtras extras;
  extras.vocab = {"<pad>", "<s>", "</s>", "<unk>", "<sep>", "x"};
  extras.metadata_json = R"({"note":"unit"})";
  extras.step = 42;
  for (const auto& [name, t] : p.named_parameters()) extras.momentum.emplace_back(t.size(), 0.5);
  save_checkpoint(path, p, extras);

  CheckpointExtras loaded;
  const auto q = load_checkpoint(path, &loaded);
  EXPECT_EQ(q.config.arch, cfg.arch);
  EXPECT_EQ(q.config.attn_source, cfg.attn_source);
  EXPECT_EQ(q.config.seed, cfg.seed);
  EXPECT_EQ(loaded.vocab, extras.vocab);
  EXPECT_EQ(loaded.step, 42);
  EXPECT_EQ(loaded.momentum, extras.momentum);
  EXPECT_EQ(loaded.metadata_json, R"({"note":"unit"})");
  const auto np = p.named_parameters(), nq = q.named_parameters();
  for (std::size_t i = 0; i < np.size(); ++i) EXPECT_EQ(flat(np[i].second), flat(nq[i].second));
  EXPECT_TRUE(q.output.same_storage(q.embedding));
  std::filesystem::remove(path);
}

INSTANTIATE_TEST_SUITE_P(BothLayouts, ModelArchTest,
                         ::testing::Values(Arch::kEncoderDecoder, Arch::kDecoderOnly),
                         [](const auto& info) { return to_string(info.param); });

TEST(ModelTest, ParameterCountMatchesClosedForm) {
  ModelConfig c;  // encoder_decoder, d=64, 2 layers, 4 heads, vocab 128, tied
  const std::size_t d = 64, v = 128, layers = 2;
  const std::size_t ln = 2 * d;
  const std::size_t attn = 4 * (d * d + d);
  const std::size_t ffn = d * 4 * d + 4 * d + 4 * d * d + d;
  const std::size_t enc_layer = ln + attn + ln + ffn;
  const std::size_t dec_layer = ln + attn + ln + attn + ln + ffn;
  const std::size_t expected = v * d + layers * enc_layer + ln + layers * dec_layer + ln;
  EXPECT_EQ(expected, 241920u);
  EXPECT_EQ(init_params(c).parameter_count(), expected);

  c.tie_output_embedding = false;
  EXPECT_EQ(init_params(c).parameter_count(), expected + v * d);
  c.arch = Arch::kDecoderOnly;
  c.tie_output_embedding = true;
  EXPECT_EQ(init_params(c).parameter_count(), v * d + layers * (ln + attn + ln + ffn) + ln);
}

TEST(ModelTest, ConfigValidationNamesTheField) {
  ModelConfig c;
  c.n_heads = 5;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "model.n_heads");
  }
  c = ModelConfig{};
  c.vocab_size = 3;
  EXPECT_THROW(c.validate(), ConfigError);
}

// Decoder-only atten: final self-attention, head-averaged, restricted to the
// source columns and renormalised; recomputed here from the raw record.
TEST(ModelTest, DecoderOnlyAttenIsRenormalisedSourceSlice) {
  const auto p = init_params(tiny_config(Arch::kDecoderOnly, 19));
  const TokenSeq src{5, 6, 7};
  const TokenSeq tgt{8, 9, 10};
  const auto trace = forward_teacher_forced(p, src, tgt);
  const auto& rec = trace.attention.back();
  ASSERT_EQ(rec.queries, 1 + src.size() + 1 + tgt.size() - 1);
  for (std::size_t t = 0; t < tgt.size(); ++t) {
    const std::size_t q = src.size() + 1 + t;
    std::vector<double> row(src.size(), 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j < src.size(); ++j) {
      for (std::size_t h = 0; h < rec.heads; ++h) row[j] += rec.weight(h, q, j + 1) / rec.heads;
      total += row[j];
    }
    for (std::size_t j = 0; j < src.size(); ++j) {
      EXPECT_NEAR(trace.atten.at(t, j), row[j] / total, 1e-12);
    }
  }
}

TEST(ModelTest, EncoderDecoderAttenIsFinalCrossAttentionMean) {
  const auto p = init_params(tiny_config(Arch::kEncoderDecoder, 23, 13, 8, 2, 2));
  const TokenSeq src{5, 6, 7, 8};
  const TokenSeq tgt{9, 10};
  const auto trace = forward_teacher_forced(p, src, tgt);
  const AttentionRecord* last = nullptr;
  for (const auto& r : trace.attention) {
    if (r.kind == AttentionKind::kCross) last = &r;
  }
  ASSERT_NE(last, nullptr);
  EXPECT_EQ(last->layer, 1);
  for (std::size_t t = 0; t < tgt.size(); ++t) {
    for (std::size_t j = 0; j < src.size(); ++j) {
      double m = 0.0;
      for (std::size_t h = 0; h < last->heads; ++h) m += last->weight(h, t, j) / last->heads;
      EXPECT_NEAR(trace.atten.at(t, j), m, 1e-12);
    }
  }
}

TEST(ModelTest, SinusoidalPositionsKnownValues) {
  const auto pe = sinusoidal_positions(4, 4);
  EXPECT_EQ(pe[0 * 4 + 0], 0.0);
  EXPECT_EQ(pe[0 * 4 + 1], 1.0);
  EXPECT_NEAR(pe[1 * 4 + 0], std::sin(1.0), 1e-15);
  EXPECT_NEAR(pe[1 * 4 + 1], std::cos(1.0), 1e-15);
  EXPECT_NEAR(pe[2 * 4 + 2], std::sin(2.0 / 100.0), 1e-15);
}

TEST(ModelTest, CheckpointRejectsGarbage) {
  const auto path = std::filesystem::temp_directory_path() / "repsup_garbage.ckpt";
  { std::ofstream(path) << "NOPE\n{}\n"; }
  EXPECT_THROW(load_checkpoint(path), InputError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace repsup
