// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0
//
// Repetition, diversity and overlap metrics over whitespace-tokenized text.
//
// Conventions: rep-n values are per-sentence fractions averaged over the
// corpus and reported x100 in MetricsReport; rep-w, rep-r, div and ROUGE-L
// stay fractions; BLEU is 0..100.

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace repsup {

using Sentence = std::vector<std::string>;
using Corpus = std::vector<Sentence>;

/// Trims and splits on ASCII whitespace. No case folding.
Sentence tokenize(std::string_view text);

/// 1 - distinct/total n-grams of one sentence; 0 with fewer than n tokens.
double rep_n(const Sentence& tokens, int n);
/// Mean of rep_n over sentences, as a fraction.
double corpus_rep_n(const Corpus& corpus, int n);

/// Fraction of positions whose token occurs in the window
/// s[max(1, t-w-1) .. t-1] (1-based), for one sentence.
double rep_w(const Sentence& tokens, int w);
/// Sentence mean of rep_w. Throws InputError on an empty corpus.
double rep_w(const Corpus& corpus, int w);

/// Fraction of positions that take part in a bigram occurring at least twice
/// (as its first or its second token).
double rep_r(const Sentence& tokens);
double corpus_rep_r(const Corpus& corpus);

/// prod_{n=2..4} (1 - rep_n), rep values as fractions.
double diversity(double rep2, double rep3, double rep4);

std::size_t uniq_unigrams(const Corpus& corpus);

/// Corpus BLEU with add-one smoothing on n >= 2 precisions, 0..100.
double bleu(const Corpus& candidates, const Corpus& references);

/// LCS-based F1 for one pair.
double rouge_l(const Sentence& candidate, const Sentence& reference);
double corpus_rouge_l(const Corpus& candidates, const Corpus& references);

struct MetricsReport {
  double bleu = 0.0;
  double rouge_l = 0.0;
  double rep2 = 0.0;  // percent
  double rep3 = 0.0;  // percent
  double rep4 = 0.0;  // percent, feeds div
  double rep_w = 0.0;
  double rep_r = 0.0;
  double div = 0.0;
  std::size_t uniq1 = 0;
  std::size_t n_sentences = 0;
};

struct MetricsOptions {
  int rep_w_window = 16;
};

/// Full report of `hypotheses` against `references` (equal sizes).
MetricsReport evaluate(const Corpus& hypotheses, const Corpus& references,
                       const MetricsOptions& options = {});

/// Keeps the ceil(percentile% * |corpus|) sentences with the highest
/// per-sentence rep-w (stable on ties) and reports on that subset.
MetricsReport top_percentile_screen(const Corpus& hypotheses, const Corpus& references,
                                    double percentile,
                                    const MetricsOptions& options = {});
/// Indices chosen by top_percentile_screen, in rank order.
std::vector<std::size_t> top_percentile_indices(const Corpus& hypotheses,
                                                double percentile, int rep_w_window);

}  // namespace repsup
