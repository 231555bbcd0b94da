// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0
//
// Vocabulary, JSONL corpus I/O and the synthetic "keyword-stacked title"
// generator. Text is whitespace-tokenized throughout.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "repsup/common.h"

namespace repsup {

class Vocab {
 public:
  /// Only the reserved tokens.
  Vocab();
  /// Rebuilds from an id -> token list whose first entries are the reserved
  /// tokens. Throws InputError on duplicates or a wrong reserved prefix.
  static Vocab from_tokens(std::vector<std::string> id_to_token);
  static const std::vector<std::string>& reserved_tokens();

  std::size_t size() const { return id_to_token_.size(); }
  /// kUnk for unknown tokens.
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  TokenSeq encode(std::string_view text) const;
  /// Joins with single spaces, stops at EOS and skips PAD/BOS/SEP.
  std::string decode(const TokenSeq& ids) const;

 private:
  void add(std::string token);

  std::map<std::string, TokenId, std::less<>> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// The `max_size - 5` most frequent tokens of `texts` (ties broken
/// lexicographically) after the reserved ids. Throws InputError on an empty
/// corpus and ConfigError if max_size <= 5.
Vocab build_vocab(const std::vector<std::string>& texts, std::size_t max_size);

enum class PairTag { kClean, kStacked };
std::string to_string(PairTag tag);
PairTag parse_pair_tag(const std::string& name);

struct CorpusPair {
  std::string src;
  std::string ref;
  std::optional<PairTag> tag;
  std::optional<std::string> hyp;

  bool operator==(const CorpusPair&) const = default;
};

struct SyntheticParams {
  std::uint64_t seed = 0;
  std::size_t n_pairs = 2000;
  double stack_ratio = 0.5;
};

/// Deterministic English -> toy-German product titles. A title is a sequence
/// of keyword groups (attributes + noun); each group is translated word by
/// word with its order inverted. Clean titles use no word twice; stacked
/// titles repeat one group 2-4 times and the reference keeps the repetition.
std::vector<CorpusPair> gen_synthetic(const SyntheticParams& params);

/// Source -> target lexicon used by the generator, in a fixed order.
const std::vector<std::pair<std::string, std::string>>& synthetic_lexicon();

/// One JSON object per line with "src", "ref" and optional "tag", "hyp".
/// Blank lines are skipped; CRLF is accepted. Errors name the line number.
std::vector<CorpusPair> load_jsonl(const std::filesystem::path& path);
std::vector<CorpusPair> parse_jsonl(std::string_view text);
void save_jsonl(const std::filesystem::path& path, const std::vector<CorpusPair>& pairs);
std::string to_jsonl(const std::vector<CorpusPair>& pairs);

/// Deterministic held-out split: the last `eval_fraction` of the pairs
/// (at least one when the corpus has two or more pairs).
struct Split {
  std::vector<CorpusPair> train, eval;
};
Split split_corpus(const std::vector<CorpusPair>& pairs, double eval_fraction);

std::vector<CorpusPair> filter_by_tag(const std::vector<CorpusPair>& pairs, PairTag tag);

/// Target ids for training: encoded reference followed by EOS.
TokenSeq encode_target(const Vocab& vocab, std::string_view ref);

}  // namespace repsup
