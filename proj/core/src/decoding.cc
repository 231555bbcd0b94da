// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0

#include "repsup/decoding.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace repsup {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void mask_never_generated(std::vector<double>& logits) {
  for (TokenId id : {kPad, kBos, kSep}) {
    if (static_cast<std::size_t>(id) < logits.size()) logits[static_cast<std::size_t>(id)] = kNegInf;
  }
}

std::vector<double> softmax(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::isinf(logits[i]) && logits[i] < 0 ? 0.0 : std::exp(logits[i] - m);
    z += p[i];
  }
  for (auto& x : p) x /= z;
  return p;
}

// First index of the maximum, i.e. the lowest id among ties.
TokenId argmax(const std::vector<double>& v) {
  return static_cast<TokenId>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Candidate ids ordered by logit descending, then id ascending.
std::vector<TokenId> top_k(const std::vector<double>& logits, int k) {
  std::vector<TokenId> ids(logits.size());
  std::iota(ids.begin(), ids.end(), 0);
  const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(kk), ids.end(),
                    [&logits](TokenId a, TokenId b) {
                      const double la = logits[static_cast<std::size_t>(a)];
                      const double lb = logits[static_cast<std::size_t>(b)];
                      return la != lb ? la > lb : a < b;
                    });
  ids.resize(kk);
  // Drop masked candidates.
  std::erase_if(ids, [&logits](TokenId id) {
    return logits[static_cast<std::size_t>(id)] == kNegInf;
  });
  return ids;
}

TokenId sample(const std::vector<double>& probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0.0;
  TokenId last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = static_cast<TokenId>(i);
    if (u < acc) return last;
  }
  return last;
}

bool completes_repeated_ngram(const TokenSeq& generated, TokenId candidate, int n) {
  const auto order = static_cast<std::size_t>(n);
  if (generated.size() + 1 < order || generated.size() < order) return false;
  // The n-gram that appending `candidate` would create.
  TokenSeq gram(generated.end() - static_cast<std::ptrdiff_t>(order - 1), generated.end());
  gram.push_back(candidate);
  for (std::size_t i = 0; i + order <= generated.size(); ++i) {
    if (std::equal(gram.begin(), gram.end(), generated.begin() + static_cast<std::ptrdiff_t>(i))) {
      return true;
    }
  }
  return false;
}

}  // namespace

std::string to_string(DecodeStrategy strategy) {
  switch (strategy) {
    case DecodeStrategy::kGreedy: return "greedy";
    case DecodeStrategy::kTopK: return "top_k";
    case DecodeStrategy::kPenalizedSampling: return "penalized_sampling";
    case DecodeStrategy::kContrastiveSearch: return "contrastive_search";
    case DecodeStrategy::kGreedyNgramBlock: return "greedy_ngram_block";
  }
  return "?";
}

DecodeStrategy parse_decode_strategy(const std::string& name) {
  if (name == "greedy") return DecodeStrategy::kGreedy;
  if (name == "top_k") return DecodeStrategy::kTopK;
  if (name == "penalized_sampling") return DecodeStrategy::kPenalizedSampling;
  if (name == "contrastive_search") return DecodeStrategy::kContrastiveSearch;
  if (name == "greedy_ngram_block") return DecodeStrategy::kGreedyNgramBlock;
  throw ConfigError("decode.strategy", "unknown strategy '" + name + "'");
}

void DecodeConfig::validate() const {
  if (max_new_tokens <= 0) throw ConfigError("decode.max_new_tokens", "must be positive");
  if (k <= 0) throw ConfigError("decode.k", "must be positive");
  if (!(ps_theta > 1.0)) throw ConfigError("decode.ps_theta", "must be > 1");
  if (!(cs_alpha >= 0.0 && cs_alpha <= 1.0)) {
    throw ConfigError("decode.cs_alpha", "must lie in [0, 1]");
  }
  if (block_n <= 0) throw ConfigError("decode.block_n", "must be positive");
}

std::vector<double> TransformerStepModel::next_logits(const TokenSeq& src,
                                                      const TokenSeq& prefix) const {
  return forward_step(params_, src, prefix).logits;
}

std::vector<std::vector<double>> TransformerStepModel::hidden_states(
    const TokenSeq& src, const TokenSeq& prefix) const {
  ad::NoGradGuard guard;
  const auto trace = forward_prefix(params_, src, prefix);
  std::vector<std::vector<double>> out(trace.length());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = trace.hidden.row_values(i);
  return out;
}

std::vector<double> penalize_logits(std::vector<double> logits, const TokenSeq& history,
                                    double theta) {
  double lo = std::numeric_limits<double>::infinity();
  for (double x : logits) {
    if (std::isfinite(x)) lo = std::min(lo, x);
  }
  for (auto& x : logits) {
    if (std::isfinite(x)) x -= lo;
  }
  std::vector<bool> seen(logits.size(), false);
  for (TokenId id : history) {
    const auto i = static_cast<std::size_t>(id);
    if (id == kEos || i >= logits.size() || seen[i]) continue;
    seen[i] = true;
    logits[i] /= theta;
  }
  return logits;
}

DecodeResult decode(const StepModel& model, const TokenSeq& src, const DecodeConfig& cfg) {
  cfg.validate();
  if (src.empty()) throw InputError("decode: empty source");
  DecodeResult result;
  TokenSeq prefix{kBos};
  std::mt19937_64 rng(cfg.seed);

  for (int step = 0; step < cfg.max_new_tokens; ++step) {
    std::vector<double> raw = model.next_logits(src, prefix);
    if (raw.size() != static_cast<std::size_t>(model.vocab_size())) {
      throw InputError("decode: model returned a logit row of the wrong size");
    }
    std::vector<double> logits = raw;
    mask_never_generated(logits);
    const std::vector<double> probs = softmax(logits);

    StepDiagnostic diag;
    diag.step = step;
    TokenId chosen = 0;

    switch (cfg.strategy) {
      case DecodeStrategy::kGreedy: {
        chosen = argmax(logits);
        diag.p_post = probs[static_cast<std::size_t>(chosen)];
        break;
      }
      case DecodeStrategy::kTopK: {
        const auto cand = top_k(logits, cfg.k);
        std::vector<double> restricted(logits.size(), kNegInf);
        for (TokenId id : cand) restricted[static_cast<std::size_t>(id)] = logits[static_cast<std::size_t>(id)];
        const auto p = softmax(restricted);
        chosen = sample(p, rng);
        diag.p_post = p[static_cast<std::size_t>(chosen)];
        break;
      }
      case DecodeStrategy::kPenalizedSampling: {
        std::vector<double> shifted = penalize_logits(raw, {}, cfg.ps_theta);
        std::vector<double> penalized = penalize_logits(raw, result.tokens, cfg.ps_theta);
        mask_never_generated(penalized);
        const auto p = softmax(penalized);
        chosen = sample(p, rng);
        const auto c = static_cast<std::size_t>(chosen);
        diag.p_post = p[c];
        diag.suppression = shifted[c] - penalized[c];
        break;
      }
      case DecodeStrategy::kContrastiveSearch: {
        const auto cand = top_k(logits, cfg.k);
        double best = -std::numeric_limits<double>::infinity();
        double best_penalty = 0.0;
        for (TokenId v : cand) {
          double penalty = 0.0;
          if (cfg.cs_alpha > 0.0) {
            TokenSeq extended = prefix;
            extended.push_back(v);
            const auto hidden = model.hidden_states(src, extended);
            const auto& hv = hidden.back();
            double max_sim = -1.0;
            for (std::size_t j = 0; j + 1 < hidden.size(); ++j) {
              max_sim = std::max(max_sim, ad::cosine(hv, hidden[j]));
            }
            penalty = cfg.cs_alpha * max_sim;
          }
          const double score =
              (1.0 - cfg.cs_alpha) * probs[static_cast<std::size_t>(v)] - penalty;
          if (score > best) {
            best = score;
            chosen = v;
            best_penalty = penalty;
          }
        }
        diag.p_post = probs[static_cast<std::size_t>(chosen)];
        diag.suppression = best_penalty;
        break;
      }
      case DecodeStrategy::kGreedyNgramBlock: {
        std::vector<double> blocked = logits;
        int count = 0;
        for (std::size_t id = 0; id < blocked.size(); ++id) {
          if (static_cast<TokenId>(id) == kEos || blocked[id] == kNegInf) continue;
          if (completes_repeated_ngram(result.tokens, static_cast<TokenId>(id), cfg.block_n)) {
            blocked[id] = kNegInf;
            ++count;
          }
        }
        diag.suppression = count;
        if (std::all_of(blocked.begin(), blocked.end(), [](double x) { return x == kNegInf; })) {
          diag.fallback = true;
          result.fallback_fired = true;
          chosen = argmax(logits);
          diag.p_post = probs[static_cast<std::size_t>(chosen)];
        } else {
          chosen = argmax(blocked);
          diag.p_post = softmax(blocked)[static_cast<std::size_t>(chosen)];
        }
        break;
      }
    }

    diag.token = chosen;
    diag.p_pre = probs[static_cast<std::size_t>(chosen)];
    result.steps.push_back(diag);
    if (chosen == kEos) {
      result.hit_eos = true;
      break;
    }
    result.tokens.push_back(chosen);
    prefix.push_back(chosen);
  }
  return result;
}

DecodeResult decode(const ModelParams& params, const TokenSeq& src, const DecodeConfig& cfg) {
  DecodeConfig bounded = cfg;
  const int max_len = params.config.max_len;
  const int capacity = params.config.arch == Arch::kEncoderDecoder
                           ? max_len
                           : max_len - static_cast<int>(src.size()) - 1;
  if (capacity <= 0) throw InputError("decode: source leaves no room for generation");
  bounded.max_new_tokens = std::min(cfg.max_new_tokens, capacity);
  return decode(TransformerStepModel(params), src, bounded);
}

std::string diagnostics_jsonl(const DecodeResult& result, std::size_t sentence) {
  std::ostringstream os;
  for (const auto& s : result.steps) {
    nlohmann::ordered_json j;
    j["sentence"] = sentence;
    j["step"] = s.step;
    j["token"] = s.token;
    j["p_pre"] = s.p_pre;
    j["p_post"] = s.p_post;
    j["suppression"] = s.suppression;
    j["fallback"] = s.fallback;
    os << j.dump() << '\n';
  }
  return os.str();
}

}  // namespace repsup
