// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "repsup/common.h"
#include "repsup/metrics.h"
#include "test_support.h"

namespace repsup {
namespace {

using testing::oracle_rep_n;
using testing::oracle_rep_r;
using testing::oracle_rep_w;
using testing::random_sentence;

TEST(MetricsTest, TokenizeSplitsOnWhitespace) {
  EXPECT_EQ(tokenize("  a\tb \r\nc  "), (Sentence{"a", "b", "c"}));
  EXPECT_TRUE(tokenize(" \t ").empty());
  EXPECT_EQ(tokenize("Ab ab"), (Sentence{"Ab", "ab"}));
}

TEST(MetricsTest, HandExamples) {
  const Sentence s = tokenize("a b a b c");
  // bigrams ab ba ab bc: 3 distinct of 4.
  EXPECT_DOUBLE_EQ(rep_n(s, 2), 0.25);
  EXPECT_DOUBLE_EQ(rep_n(s, 1), 1.0 - 3.0 / 5.0);
  EXPECT_DOUBLE_EQ(rep_n(s, 6), 0.0);
  // positions 1..4 take part in the doubled bigram "a b".
  EXPECT_DOUBLE_EQ(rep_r(s), 0.8);
  // w=1 looks back two tokens: hits at "a"(3) and "b"(4).
  EXPECT_DOUBLE_EQ(rep_w(s, 1), 0.4);
  EXPECT_DOUBLE_EQ(rep_w(tokenize("a b c a"), 1), 0.0);
  EXPECT_DOUBLE_EQ(rep_w(tokenize("a b c a"), 2), 0.25);
  EXPECT_DOUBLE_EQ(diversity(0.5, 0.5, 0.0), 0.25);
}

TEST(MetricsTest, RepetitionMetricsMatchOracles) {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 500; ++i) {
    const auto s = random_sentence(rng, 1 + i % 6, 0, 25);
    for (int n = 1; n <= 4; ++n) EXPECT_NEAR(rep_n(s, n), oracle_rep_n(s, n), 1e-15);
    for (int w : {1, 2, 5, 16}) EXPECT_NEAR(rep_w(s, w), oracle_rep_w(s, w), 1e-15);
    EXPECT_NEAR(rep_r(s), oracle_rep_r(s), 1e-15);
  }
}

TEST(MetricsTest, EmptyAndDegenerateInputs) {
  EXPECT_EQ(rep_n(Sentence{}, 2), 0.0);
  EXPECT_EQ(rep_r(Sentence{}), 0.0);
  EXPECT_EQ(rep_w(Sentence{}, 3), 0.0);
  EXPECT_THROW(rep_w(Corpus{}, 3), InputError);
  EXPECT_THROW(rep_w(Sentence{"a"}, 0), InputError);
  EXPECT_THROW(rep_n(Sentence{"a"}, 0), InputError);
  EXPECT_THROW(bleu({}, {}), InputError);
  EXPECT_THROW(bleu({{"a"}}, {}), InputError);
  EXPECT_EQ(bleu({{"x"}}, {{"y"}}), 0.0);
}

TEST(MetricsTest, BleuFrozenExample) {
  // p1 = 2/4, p2 = (1+1)/(3+1), p3 = (0+1)/(2+1), p4 = (0+1)/(1+1), BP = 1.
  const double b = bleu({tokenize("the the the cat")}, {tokenize("the cat sat")});
  EXPECT_NEAR(b, 100.0 * std::pow(1.0 / 24.0, 0.25), 1e-12);
  EXPECT_NEAR(b, 45.1801, 1e-4);
}

TEST(MetricsTest, BleuIdentityAndBrevityPenalty) {
  const Corpus refs{tokenize("a b c d e"), tokenize("f g h i")};
  EXPECT_NEAR(bleu(refs, refs), 100.0, 1e-12);
  // Candidate 3 tokens vs reference 5: BP = exp(1 - 5/3).
  const double b = bleu({tokenize("a b c")}, {tokenize("a b c d e")});
  const double precisions = 1.0 * (3.0 / 3.0) * (2.0 / 2.0) * (1.0 / 1.0);
  EXPECT_NEAR(b, 100.0 * std::exp(1.0 - 5.0 / 3.0) * std::pow(precisions, 0.25), 1e-12);
}

TEST(MetricsTest, RougeL) {
  EXPECT_NEAR(rouge_l(tokenize("a b c"), tokenize("a c")), 0.8, 1e-15);
  EXPECT_EQ(rouge_l({}, {}), 1.0);
  EXPECT_EQ(rouge_l({"a"}, {}), 0.0);
  EXPECT_EQ(rouge_l({"a"}, {"b"}), 0.0);
  EXPECT_NEAR(corpus_rouge_l({tokenize("a b"), tokenize("c")}, {tokenize("a b"), tokenize("d")}),
              0.5, 1e-15);
}

TEST(MetricsTest, EvaluateScalesRepNToPercent) {
  const Corpus hyp{tokenize("a b a b"), tokenize("c d e")};
  const auto r = evaluate(hyp, hyp);
  EXPECT_NEAR(r.rep2, 100.0 * (1.0 / 3.0 + 0.0) / 2.0, 1e-12);
  EXPECT_NEAR(r.bleu, 100.0, 1e-12);
  EXPECT_NEAR(r.div, (1 - r.rep2 / 100) * (1 - r.rep3 / 100) * (1 - r.rep4 / 100), 1e-15);
  EXPECT_EQ(r.uniq1, 5u);
  EXPECT_EQ(r.n_sentences, 2u);
}

TEST(MetricsTest, PercentileScreenKeepsMostRepetitive) {
  const Corpus hyp{tokenize("a b c"), tokenize("a a a a"), tokenize("a b a"), tokenize("x y")};
  const auto idx = top_percentile_indices(hyp, 50.0, 16);
  EXPECT_EQ(idx, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(top_percentile_indices(hyp, 100.0, 16).size(), 4u);
  EXPECT_EQ(top_percentile_indices(hyp, 1.0, 16).size(), 1u);
  EXPECT_THROW(top_percentile_indices(hyp, 0.0, 16), InputError);
  const auto r = top_percentile_screen(hyp, hyp, 50.0);
  EXPECT_EQ(r.n_sentences, 2u);
  // ties keep corpus order
  const auto tie = top_percentile_indices({tokenize("a b"), tokenize("c d")}, 50.0, 16);
  EXPECT_EQ(tie, (std::vector<std::size_t>{0}));
}

}  // namespace
}  // namespace repsup
