// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0

#include "repsup/metrics.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "repsup/common.h"

namespace repsup {

namespace {

std::string join_gram(const Sentence& s, std::size_t begin, std::size_t n) {
  std::string key;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) key.push_back('\x1f');
    key += s[begin + i];
  }
  return key;
}

std::map<std::string, std::size_t> gram_counts(const Sentence& s, std::size_t n) {
  std::map<std::string, std::size_t> counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[join_gram(s, i, n)];
  return counts;
}

template <typename F>
double sentence_mean(const Corpus& corpus, F per_sentence) {
  if (corpus.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : corpus) total += per_sentence(s);
  return total / static_cast<double>(corpus.size());
}

std::size_t lcs_length(const Sentence& a, const Sentence& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

void require_parallel(const Corpus& c, const Corpus& r, const char* what) {
  if (c.size() != r.size()) {
    throw InputError(std::string(what) + ": " + std::to_string(c.size()) +
                     " candidates vs " + std::to_string(r.size()) + " references");
  }
}

}  // namespace

Sentence tokenize(std::string_view text) {
  Sentence out;
  std::size_t i = 0;
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

double rep_n(const Sentence& tokens, int n) {
  if (n < 1) throw InputError("rep_n: n must be >= 1");
  const auto order = static_cast<std::size_t>(n);
  if (tokens.size() < order) return 0.0;
  const std::size_t total = tokens.size() - order + 1;
  const std::size_t distinct = gram_counts(tokens, order).size();
  return 1.0 - static_cast<double>(distinct) / static_cast<double>(total);
}

double corpus_rep_n(const Corpus& corpus, int n) {
  return sentence_mean(corpus, [n](const Sentence& s) { return rep_n(s, n); });
}

double rep_w(const Sentence& tokens, int w) {
  if (w < 1) throw InputError("rep_w: window must be >= 1");
  if (tokens.empty()) return 0.0;
  std::size_t hits = 0;
  // 1-based t; window s[max(1, t-w-1) .. t-1].
  for (std::size_t t = 2; t <= tokens.size(); ++t) {
    const std::size_t span = static_cast<std::size_t>(w) + 1;
    const std::size_t lo = t > span ? t - span : 1;
    for (std::size_t j = lo; j < t; ++j) {
      if (tokens[j - 1] == tokens[t - 1]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(tokens.size());
}

double rep_w(const Corpus& corpus, int w) {
  if (corpus.empty()) throw InputError("rep_w: empty corpus");
  return sentence_mean(corpus, [w](const Sentence& s) { return rep_w(s, w); });
}

double rep_r(const Sentence& tokens) {
  if (tokens.empty()) return 0.0;
  const auto counts = gram_counts(tokens, 2);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const bool starts = i + 1 < tokens.size() && counts.at(join_gram(tokens, i, 2)) > 1;
    const bool ends = i > 0 && counts.at(join_gram(tokens, i - 1, 2)) > 1;
    if (starts || ends) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(tokens.size());
}

double corpus_rep_r(const Corpus& corpus) {
  return sentence_mean(corpus, [](const Sentence& s) { return rep_r(s); });
}

double diversity(double rep2, double rep3, double rep4) {
  return (1.0 - rep2) * (1.0 - rep3) * (1.0 - rep4);
}

std::size_t uniq_unigrams(const Corpus& corpus) {
  std::set<std::string> types;
  for (const auto& s : corpus) types.insert(s.begin(), s.end());
  return types.size();
}

double bleu(const Corpus& candidates, const Corpus& references) {
  if (candidates.empty()) throw InputError("bleu: empty candidate corpus");
  require_parallel(candidates, references, "bleu");
  constexpr std::size_t kMaxOrder = 4;
  std::array<double, kMaxOrder> matches{}, totals{};
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const auto& cand = candidates[s];
    const auto& ref = references[s];
    cand_len += static_cast<double>(cand.size());
    ref_len += static_cast<double>(ref.size());
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      const auto cc = gram_counts(cand, n);
      const auto rc = gram_counts(ref, n);
      for (const auto& [gram, count] : cc) {
        const auto it = rc.find(gram);
        if (it != rc.end()) matches[n - 1] += static_cast<double>(std::min(count, it->second));
        totals[n - 1] += static_cast<double>(count);
      }
    }
  }
  if (cand_len == 0.0 || totals[0] == 0.0 || matches[0] == 0.0) return 0.0;
  double log_sum = std::log(matches[0] / totals[0]);
  for (std::size_t n = 1; n < kMaxOrder; ++n) {
    log_sum += std::log((matches[n] + 1.0) / (totals[n] + 1.0));
  }
  const double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return 100.0 * bp * std::exp(log_sum / static_cast<double>(kMaxOrder));
}

double rouge_l(const Sentence& candidate, const Sentence& reference) {
  if (candidate.empty() && reference.empty()) return 1.0;
  if (candidate.empty() || reference.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

double corpus_rouge_l(const Corpus& candidates, const Corpus& references) {
  require_parallel(candidates, references, "rouge_l");
  if (candidates.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    total += rouge_l(candidates[i], references[i]);
  }
  return total / static_cast<double>(candidates.size());
}

MetricsReport evaluate(const Corpus& hypotheses, const Corpus& references,
                       const MetricsOptions& options) {
  require_parallel(hypotheses, references, "evaluate");
  MetricsReport r;
  r.n_sentences = hypotheses.size();
  r.bleu = bleu(hypotheses, references);
  r.rouge_l = corpus_rouge_l(hypotheses, references);
  const double rep2 = corpus_rep_n(hypotheses, 2);
  const double rep3 = corpus_rep_n(hypotheses, 3);
  const double rep4 = corpus_rep_n(hypotheses, 4);
  r.rep2 = 100.0 * rep2;
  r.rep3 = 100.0 * rep3;
  r.rep4 = 100.0 * rep4;
  r.rep_w = rep_w(hypotheses, options.rep_w_window);
  r.rep_r = corpus_rep_r(hypotheses);
  r.div = diversity(rep2, rep3, rep4);
  r.uniq1 = uniq_unigrams(hypotheses);
  return r;
}

std::vector<std::size_t> top_percentile_indices(const Corpus& hypotheses,
                                                double percentile, int rep_w_window) {
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw InputError("percentile must lie in (0, 100]");
  }
  const auto keep = static_cast<std::size_t>(
      std::ceil(percentile / 100.0 * static_cast<double>(hypotheses.size())));
  if (keep == 0) throw InputError("percentile screen selected no sentences");
  std::vector<double> score(hypotheses.size());
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    score[i] = rep_w(hypotheses[i], rep_w_window);
  }
  std::vector<std::size_t> order(hypotheses.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&score](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  order.resize(std::min(keep, order.size()));
  return order;
}

MetricsReport top_percentile_screen(const Corpus& hypotheses, const Corpus& references,
                                    double percentile, const MetricsOptions& options) {
  require_parallel(hypotheses, references, "top_percentile_screen");
  const auto picked = top_percentile_indices(hypotheses, percentile, options.rep_w_window);
  Corpus hyp, ref;
  for (auto i : picked) {
    hyp.push_back(hypotheses[i]);
    ref.push_back(references[i]);
  }
  return evaluate(hyp, ref, options);
}

}  // namespace repsup
