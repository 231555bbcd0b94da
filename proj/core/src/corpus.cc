// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0

#include "repsup/corpus.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "repsup/metrics.h"

namespace repsup {

namespace {

const std::vector<std::pair<std::string, std::string>> kAttributes = {
    {"red", "rot"},           {"blue", "blau"},          {"green", "gruen"},
    {"black", "schwarz"},     {"white", "weiss"},        {"yellow", "gelb"},
    {"pink", "rosa"},         {"grey", "grau"},          {"brown", "braun"},
    {"purple", "lila"},       {"cotton", "baumwoll"},    {"leather", "leder"},
    {"wool", "woll"},         {"silk", "seiden"},        {"plastic", "kunststoff"},
    {"metal", "metall"},      {"wooden", "holz"},        {"glass", "glas"},
    {"steel", "stahl"},       {"bamboo", "bambus"},      {"custom", "individuell"},
    {"plain", "schlicht"},    {"embroidered", "bestickt"}, {"printed", "bedruckt"},
    {"vintage", "antik"},     {"modern", "modern"},      {"classic", "klassisch"},
    {"casual", "laessig"},    {"sports", "sport"},       {"outdoor", "aussen"},
    {"men", "herren"},        {"women", "damen"},        {"kids", "kinder"},
    {"baby", "baby"},         {"unisex", "unisex"},      {"summer", "sommer"},
    {"winter", "winter"},     {"waterproof", "wasserdicht"}, {"portable", "tragbar"},
    {"foldable", "faltbar"},  {"wireless", "kabellos"},  {"electric", "elektrisch"},
    {"mini", "mini"},         {"large", "gross"},        {"small", "klein"},
    {"soft", "weich"},        {"light", "leicht"},       {"heavy", "schwer"},
    {"cheap", "billig"},      {"luxury", "luxus"},       {"wholesale", "grosshandel"},
    {"fashion", "mode"},      {"home", "haus"},          {"kitchen", "kuechen"},
    {"office", "buero"},      {"travel", "reise"},       {"gift", "geschenk"},
    {"smart", "schlau"},      {"digital", "digitale"},   {"round", "rund"},
};

const std::vector<std::pair<std::string, std::string>> kNouns = {
    {"cap", "kappe"},         {"hat", "hut"},            {"shirt", "hemd"},
    {"dress", "kleid"},       {"jacket", "jacke"},       {"shoes", "schuhe"},
    {"bag", "tasche"},        {"wallet", "geldboerse"},  {"watch", "uhr"},
    {"belt", "guertel"},      {"scarf", "schal"},        {"gloves", "handschuhe"},
    {"socks", "socken"},      {"pants", "hose"},         {"skirt", "rock"},
    {"sweater", "pullover"},  {"cup", "tasse"},          {"bottle", "flasche"},
    {"lamp", "lampe"},        {"chair", "stuhl"},        {"table", "tisch"},
    {"pillow", "kissen"},     {"blanket", "decke"},      {"towel", "handtuch"},
    {"knife", "messer"},      {"spoon", "loeffel"},      {"plate", "teller"},
    {"box", "kiste"},         {"toy", "spielzeug"},      {"ball", "ball"},
    {"phone", "telefon"},     {"case", "huelle"},        {"charger", "ladegeraet"},
    {"speaker", "lautsprecher"}, {"mirror", "spiegel"},  {"clock", "wecker"},
    {"umbrella", "schirm"},   {"tent", "zelt"},          {"backpack", "rucksack"},
    {"necklace", "halskette"},
};

using Group = std::vector<std::size_t>;  // indices into the combined lexicon

std::size_t draw(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

const std::vector<std::pair<std::string, std::string>>& combined() {
  static const auto lex = [] {
    auto all = kAttributes;
    all.insert(all.end(), kNouns.begin(), kNouns.end());
    return all;
  }();
  return lex;
}

// A group of 1-2 attributes plus a noun, avoiding words already in `used`.
Group make_group(std::mt19937_64& rng, std::set<std::size_t>& used) {
  Group g;
  const std::size_t n_attr = 1 + draw(rng, 2);
  while (g.size() < n_attr) {
    const std::size_t a = draw(rng, kAttributes.size());
    if (used.insert(a).second) g.push_back(a);
  }
  for (;;) {
    const std::size_t n = kAttributes.size() + draw(rng, kNouns.size());
    if (used.insert(n).second) {
      g.push_back(n);
      break;
    }
  }
  return g;
}

std::string render(const std::vector<Group>& groups, bool target) {
  const auto& lex = combined();
  std::string out;
  for (const auto& g : groups) {
    auto words = g;
    if (target) std::reverse(words.begin(), words.end());
    for (auto w : words) {
      if (!out.empty()) out.push_back(' ');
      out += target ? lex[w].second : lex[w].first;
    }
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const std::vector<std::string>& Vocab::reserved_tokens() {
  static const std::vector<std::string> r = {"<pad>", "<s>", "</s>", "<unk>", "<sep>"};
  return r;
}

Vocab::Vocab() {
  for (const auto& t : reserved_tokens()) add(t);
}

void Vocab::add(std::string token) {
  const auto id = static_cast<TokenId>(id_to_token_.size());
  if (!token_to_id_.emplace(token, id).second) {
    throw InputError("vocab: duplicate token '" + token + "'");
  }
  id_to_token_.push_back(std::move(token));
}

Vocab Vocab::from_tokens(std::vector<std::string> id_to_token) {
  const auto& reserved = reserved_tokens();
  if (id_to_token.size() < reserved.size() ||
      !std::equal(reserved.begin(), reserved.end(), id_to_token.begin())) {
    throw InputError("vocab: token list does not start with the reserved tokens");
  }
  Vocab v;
  for (std::size_t i = reserved.size(); i < id_to_token.size(); ++i) v.add(id_to_token[i]);
  return v;
}

TokenId Vocab::id(std::string_view token) const {
  const auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw InputError("vocab: id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

TokenSeq Vocab::encode(std::string_view text) const {
  TokenSeq out;
  for (const auto& w : tokenize(text)) out.push_back(id(w));
  return out;
}

std::string Vocab::decode(const TokenSeq& ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos || id == kSep) continue;
    if (!out.empty()) out.push_back(' ');
    out += token(id);
  }
  return out;
}

Vocab build_vocab(const std::vector<std::string>& texts, std::size_t max_size) {
  if (max_size <= static_cast<std::size_t>(kNumReserved)) {
    throw ConfigError("vocab.max_size", "must exceed the 5 reserved ids");
  }
  if (texts.empty()) throw InputError("build_vocab: empty corpus");
  std::map<std::string, std::size_t> freq;
  for (const auto& t : texts) {
    for (auto& w : tokenize(t)) ++freq[std::move(w)];
  }
  const auto& reserved = Vocab::reserved_tokens();
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [w, c] : freq) {
    if (std::find(reserved.begin(), reserved.end(), w) == reserved.end()) ranked.emplace_back(w, c);
  }
  // std::map iteration is lexicographic, so a stable sort by count keeps the
  // lexicographic tie-break.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = reserved;
  for (const auto& [w, c] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(w);
  }
  return Vocab::from_tokens(std::move(tokens));
}

std::string to_string(PairTag tag) { return tag == PairTag::kClean ? "clean" : "stacked"; }

PairTag parse_pair_tag(const std::string& name) {
  if (name == "clean") return PairTag::kClean;
  if (name == "stacked") return PairTag::kStacked;
  throw InputError("unknown pair tag '" + name + "'");
}

const std::vector<std::pair<std::string, std::string>>& synthetic_lexicon() { return combined(); }

std::vector<CorpusPair> gen_synthetic(const SyntheticParams& params) {
  if (!(params.stack_ratio >= 0.0 && params.stack_ratio <= 1.0)) {
    throw ConfigError("data.stack_ratio", "must lie in [0, 1]");
  }
  std::mt19937_64 rng(params.seed);
  const auto n_stacked = static_cast<std::size_t>(
      std::llround(params.stack_ratio * static_cast<double>(params.n_pairs)));
  // Which pairs are stacked: a seeded shuffle of the first n_stacked slots.
  std::vector<bool> stacked(params.n_pairs, false);
  std::fill(stacked.begin(), stacked.begin() + static_cast<std::ptrdiff_t>(n_stacked), true);
  for (std::size_t i = params.n_pairs; i > 1; --i) {
    const std::size_t j = draw(rng, i);
    const bool tmp = stacked[i - 1];
    stacked[i - 1] = stacked[j];
    stacked[j] = tmp;
  }

  std::vector<CorpusPair> out;
  out.reserve(params.n_pairs);
  for (std::size_t p = 0; p < params.n_pairs; ++p) {
    std::set<std::size_t> used;
    std::vector<Group> groups;
    const std::size_t n_groups = 2 + draw(rng, 2);
    for (std::size_t g = 0; g < n_groups; ++g) groups.push_back(make_group(rng, used));
    if (stacked[p]) {
      const Group repeated = groups[draw(rng, groups.size())];
      const std::size_t copies = 1 + draw(rng, 3);  // 2-4 occurrences in total
      for (std::size_t c = 0; c < copies; ++c) {
        const std::size_t at = draw(rng, groups.size() + 1);
        groups.insert(groups.begin() + static_cast<std::ptrdiff_t>(at), repeated);
      }
    }
    CorpusPair pair;
    pair.src = render(groups, false);
    pair.ref = render(groups, true);
    pair.tag = stacked[p] ? PairTag::kStacked : PairTag::kClean;
    out.push_back(std::move(pair));
  }
  return out;
}

std::vector<CorpusPair> parse_jsonl(std::string_view text) {
  std::vector<CorpusPair> out;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(where + ": malformed JSON: " + e.what());
    }
    if (!j.is_object()) throw InputError(where + ": expected a JSON object");
    const auto field = [&](const char* key, bool required) -> std::optional<std::string> {
      const auto it = j.find(key);
      if (it == j.end()) {
        if (required) throw InputError(where + ": missing \"" + key + "\"");
        return std::nullopt;
      }
      if (!it->is_string()) throw InputError(where + ": \"" + key + "\" must be a string");
      return it->get<std::string>();
    };
    CorpusPair pair;
    pair.src = *field("src", true);
    pair.ref = *field("ref", true);
    if (trim(pair.src).empty()) throw InputError(where + ": empty \"src\"");
    if (trim(pair.ref).empty()) throw InputError(where + ": empty \"ref\"");
    if (auto tag = field("tag", false)) {
      try {
        pair.tag = parse_pair_tag(*tag);
      } catch (const InputError& e) {
        throw InputError(where + ": " + e.what());
      }
    }
    pair.hyp = field("hyp", false);
    out.push_back(std::move(pair));
  }
  return out;
}

std::vector<CorpusPair> load_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  try {
    return parse_jsonl(ss.str());
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

std::string to_jsonl(const std::vector<CorpusPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["src"] = p.src;
    j["ref"] = p.ref;
    if (p.tag) j["tag"] = to_string(*p.tag);
    if (p.hyp) j["hyp"] = *p.hyp;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

void save_jsonl(const std::filesystem::path& path, const std::vector<CorpusPair>& pairs) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os << to_jsonl(pairs);
  if (!os) throw InputError("write failed for " + path.string());
}

Split split_corpus(const std::vector<CorpusPair>& pairs, double eval_fraction) {
  if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) {
    throw ConfigError("data.eval_fraction", "must lie in [0, 1)");
  }
  auto n_eval = static_cast<std::size_t>(
      std::llround(eval_fraction * static_cast<double>(pairs.size())));
  if (eval_fraction > 0.0 && n_eval == 0 && pairs.size() >= 2) n_eval = 1;
  Split s;
  const auto cut = pairs.begin() + static_cast<std::ptrdiff_t>(pairs.size() - n_eval);
  s.train.assign(pairs.begin(), cut);
  s.eval.assign(cut, pairs.end());
  return s;
}

std::vector<CorpusPair> filter_by_tag(const std::vector<CorpusPair>& pairs, PairTag tag) {
  std::vector<CorpusPair> out;
  std::copy_if(pairs.begin(), pairs.end(), std::back_inserter(out),
               [tag](const CorpusPair& p) { return p.tag == tag; });
  return out;
}

TokenSeq encode_target(const Vocab& vocab, std::string_view ref) {
  TokenSeq t = vocab.encode(ref);
  t.push_back(kEos);
  return t;
}

}  // namespace repsup
