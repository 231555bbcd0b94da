// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one "Ax PASS|FAIL ..." line per criterion and
// exits non-zero if any selected criterion fails. `--only A4` runs one.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.h"
#include "repsup/attribution.h"
#include "repsup/corpus.h"
#include "repsup/decoding.h"
#include "repsup/metrics.h"
#include "repsup/objectives.h"
#include "repsup/report.h"
#include "repsup/trainer.h"
#include "test_support.h"

namespace repsup {
namespace {

namespace fs = std::filesystem;
using testing::random_instance;
using testing::random_loss_inputs;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a failed sub-check; keeps going so the detail line is complete.
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

Sentence as_sentence(const TokenSeq& ids) {
  Sentence s;
  for (auto id : ids) s.push_back(std::to_string(id));
  return s;
}

// ---------------------------------------------------------------------------

void a1_gradients(Outcome& out) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kInstances = 50;
  constexpr int kWindow = 5;
  constexpr double kTemperature = 5.0, kRho = 0.5, kEpsilon = 1e-5;
  std::mt19937_64 rng(20240611);
  const std::vector<LossKind> kinds{LossKind::kCE, LossKind::kUnlikelihood,
                                    LossKind::kContrastiveLearning, LossKind::kContrastiveToken,
                                    LossKind::kCTSD};
  for (auto kind : kinds) {
    LossConfig cfg;
    cfg.kind = kind;
    cfg.window = kWindow;
    cfg.temperature = kTemperature;
    cfg.rho = kRho;
    double worst = 0.0;
    int accepted = 0, skipped = 0;
    while (accepted < kInstances) {
      // Logits, hidden states and attention logits are independent leaves.
      // Routing logits through H W^T adds entries that nearly cancel, and
      // relative error on those measures finite-difference noise only.
      auto inst = random_loss_inputs(rng, 11, 8, 7, 6);
      if (kind == LossKind::kContrastiveLearning) {
        // Keep every hinge argument cos(h_i, h_j) - 1 + rho away from the kink.
        bool near_kink = false;
        for (std::size_t i = 0; i < 7; ++i) {
          for (std::size_t j = 0; j < 7; ++j) {
            const double arg = ad::cosine(inst.hidden.row_values(i), inst.hidden.row_values(j)) -
                               1.0 + kRho;
            near_kink = near_kink || std::abs(arg) < 1e-4;
          }
        }
        if (near_kink) {
          ++skipped;
          continue;
        }
      }
      auto leaves = inst.leaves();
      const auto f = [&inst, &cfg] {
        const auto tr = inst.trace();
        return cfg.kind == LossKind::kCE ? ce_loss(tr, inst.tgt) : aux_loss(tr, inst.tgt, cfg);
      };
      worst = std::max(worst, ad::grad_check(f, leaves, kEpsilon));
      ++accepted;
    }
    out.detail << ' ' << to_string(kind) << '=' << sci(worst);
    if (skipped) out.detail << "(skipped " << skipped << ")";
    out.require(worst < 1e-5, to_string(kind) + " max rel error " + sci(worst));
  }
  const double secs = seconds_since(t0);
  out.detail << " time=" << std::round(secs * 10) / 10 << "s";
  out.require(secs < 60.0, "runtime over 60 s");
}

// ---------------------------------------------------------------------------

void a2_metric_oracles(Outcome& out) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(7);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto s = testing::random_sentence(rng, 5, 1, 30);
    for (int n : {2, 3, 4}) mismatches += rep_n(s, n) != testing::oracle_rep_n(s, n);
    for (int w : {2, 4, 16}) mismatches += rep_w(s, w) != testing::oracle_rep_w(s, w);
    mismatches += rep_r(s) != testing::oracle_rep_r(s);
  }
  const double ex1 = rep_n(tokenize("a b a b a b"), 2);
  const double ex2 = rep_r(tokenize("a b a b"));
  const double secs = seconds_since(t0);
  out.detail << " mismatches=" << mismatches << " rep-2(ababab)=" << ex1
             << " rep-r(abab)=" << ex2;
  out.require(mismatches == 0, "oracle mismatch");
  out.require(std::abs(ex1 - 0.6) < 1e-15, "rep-2 worked example");
  out.require(ex2 == 1.0, "rep-r worked example");
  out.require(secs < 10.0, "runtime over 10 s");
}

// ---------------------------------------------------------------------------

void a3_ctsd_vs_ct(Outcome& out) {
  std::mt19937_64 rng(33);
  constexpr int kWindow = 5;
  int above_ct = 0, non_monotone = 0;
  double worst_gap = 0.0, worst_gap_1e13 = 0.0;
  const std::vector<double> temps{0.1, 0.5, 1, 2, 5, 10, 100, 1e3, 1e6, 1e9};
  for (int i = 0; i < 200; ++i) {
    const auto inst = random_instance(rng, 11, 8, 7 + i % 5, 6, 1.5);
    const auto tr = inst.trace();
    const double ct = ct_loss(tr, inst.tgt, kWindow).item();
    double prev = -1.0;
    for (double t : temps) {
      const double v = ctsd_loss(tr, inst.tgt, kWindow, t).item();
      if (v > ct) ++above_ct;
      if (v < prev) ++non_monotone;
      prev = v;
    }
    // alpha_s == 1: identical attention rows.
    ForwardTrace flat = tr;
    flat.atten = ad::Tensor::full({tr.length(), 6}, 1.0 / 6.0);
    worst_gap = std::max(worst_gap, std::abs(ctsd_loss(flat, inst.tgt, kWindow, 1e9).item() - ct));
    worst_gap_1e13 =
        std::max(worst_gap_1e13, std::abs(ctsd_loss(flat, inst.tgt, kWindow, 1e13).item() - ct));
  }
  out.detail << " ctsd>ct=" << above_ct << " non_monotone=" << non_monotone
             << " max|ctsd-ct|@T=1e9=" << sci(worst_gap) << " (@T=1e13: " << sci(worst_gap_1e13)
             << ")";
  out.require(above_ct == 0, "ctsd exceeded ct");
  out.require(non_monotone == 0, "ctsd not monotone in T");
  out.require(worst_gap < 1e-12, "|ctsd - ct| at T=1e9 is " + sci(worst_gap) + ", not < 1e-12");
}

// ---------------------------------------------------------------------------

// CE reaches 100% clean accuracy by about epoch 35 at this rate.
constexpr int kA4Epochs = 60;
constexpr double kA4LearningRate = 0.02;

void a4_training(Outcome& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = 1;
  const auto pairs = gen_synthetic({seed, 2000, 0.5});
  const auto split = split_corpus(pairs, 0.1);
  std::vector<std::string> texts;
  for (const auto& p : split.train) {
    texts.push_back(p.src);
    texts.push_back(p.ref);
  }
  ExperimentData data;
  data.vocab = build_vocab(texts, 512);
  data.train = encode_pairs(data.vocab, split.train);
  const auto stacked = filter_by_tag(split.eval, PairTag::kStacked);
  const auto clean = filter_by_tag(split.eval, PairTag::kClean);
  const auto clean_examples = encode_pairs(data.vocab, clean);

  ModelConfig mc;
  mc.vocab_size = static_cast<int>(data.vocab.size());
  mc.d_model = 64;
  mc.n_layers = 2;
  mc.n_heads = 4;
  mc.max_len = 64;
  mc.seed = seed;
  TrainConfig tc;
  tc.seed = seed;
  tc.epochs = kA4Epochs;
  tc.learning_rate = kA4LearningRate;
  tc.batch_size = 16;
  DecodeConfig dc;
  dc.max_new_tokens = 40;

  struct Arm {
    double rep2 = 0.0, accuracy = 0.0, seconds = 0.0;
  };
  const auto run_arm = [&](const LossConfig& loss) {
    const auto ta = std::chrono::steady_clock::now();
    TrainConfig cfg = tc;
    cfg.loss = loss;
    const auto trained = train(mc, cfg, data.train);
    const auto hyps = decode_corpus(trained.state.params, data.vocab, stacked, dc);
    Corpus corpus;
    for (const auto& h : hyps) corpus.push_back(tokenize(h));
    Arm arm;
    arm.rep2 = 100.0 * corpus_rep_n(corpus, 2);
    arm.accuracy = 100.0 * token_accuracy(trained.state.params, clean_examples);
    arm.seconds = seconds_since(ta);
    return arm;
  };

  LossConfig ce;
  ce.kind = LossKind::kCE;
  LossConfig ctsd;
  ctsd.kind = LossKind::kCTSD;
  ctsd.weight = 1.0;
  ctsd.window = 10;
  ctsd.temperature = 5.0;
  const Arm a = run_arm(ce);
  const Arm b = run_arm(ctsd);
  Corpus gold;
  for (const auto& p : stacked) gold.push_back(tokenize(p.ref));
  const double gold_rep2 = 100.0 * corpus_rep_n(gold, 2);
  const double reduction = a.rep2 > 0.0 ? 1.0 - b.rep2 / a.rep2 : 0.0;
  const double secs = seconds_since(t0);
  out.detail.precision(4);
  out.detail << " CE rep-2=" << a.rep2 << " acc=" << a.accuracy << "% | CTSD rep-2=" << b.rep2
             << " acc=" << b.accuracy << "% | rep-2 reduction=" << 100.0 * reduction
             << "% | reference rep-2=" << gold_rep2 << " | stacked=" << stacked.size() << " clean=" << clean.size()
             << " | time=" << std::round(secs) << "s";
  out.require(reduction >= 0.30, "rep-2 reduction below 30%");
  out.require(std::abs(a.accuracy - b.accuracy) <= 2.0, "accuracy gap over 2 points");
  out.require(secs < 900.0, "runtime over 15 min");
}

// ---------------------------------------------------------------------------

void a5_decoding(Outcome& out) {
  const testing::BigramLoopModel model(40, 7, 9, 2.0);
  const TokenSeq src{5, 6};
  DecodeConfig cfg;
  cfg.max_new_tokens = 32;
  cfg.seed = 12345;

  cfg.strategy = DecodeStrategy::kGreedy;
  const auto greedy = decode(model, src, cfg).tokens;
  cfg.strategy = DecodeStrategy::kGreedyNgramBlock;
  cfg.block_n = 2;
  const auto blocked = decode(model, src, cfg).tokens;
  cfg.strategy = DecodeStrategy::kPenalizedSampling;
  cfg.ps_theta = 1.2;
  const auto penalized = decode(model, src, cfg).tokens;

  const double greedy_rep2 = rep_n(as_sentence(greedy), 2);
  const double blocked_rep2 = rep_n(as_sentence(blocked), 2);
  const double greedy_rw = rep_w(as_sentence(greedy), 16);
  const double ps_rw = rep_w(as_sentence(penalized), 16);

  // CS with alpha 0 against argmax over the top-k, on the rigged model and on
  // random transformers.
  bool cs_equal = true;
  cfg.strategy = DecodeStrategy::kContrastiveSearch;
  cfg.cs_alpha = 0.0;
  cfg.k = 4;
  DecodeConfig topk_argmax = cfg;
  topk_argmax.strategy = DecodeStrategy::kTopK;
  topk_argmax.k = 1;
  cs_equal = cs_equal && decode(model, src, cfg).tokens == decode(model, src, topk_argmax).tokens;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10; ++i) {
    const auto p = init_params(testing::tiny_config(i % 2 ? Arch::kDecoderOnly : Arch::kEncoderDecoder,
                                                    static_cast<std::uint64_t>(i), 17, 16, 2, 2));
    const auto s = testing::random_tokens(rng, 4, 17);
    cfg.max_new_tokens = topk_argmax.max_new_tokens = 12;
    cs_equal = cs_equal && decode(p, s, cfg).tokens == decode(p, s, topk_argmax).tokens;
  }

  out.detail << " greedy rep-2=" << greedy_rep2 << " blocked rep-2=" << blocked_rep2
             << " rep-w greedy=" << greedy_rw << " ps=" << ps_rw
             << " cs(alpha=0)==top-k argmax: " << (cs_equal ? "yes" : "no");
  out.require(greedy_rep2 > 0.5, "rigged model does not loop under greedy");
  out.require(blocked_rep2 == 0.0, "n-gram blocking left a repeated bigram");
  out.require(ps_rw <= 0.5 * greedy_rw, "penalized sampling reduced rep-w by less than 50%");
  out.require(cs_equal, "contrastive search with alpha 0 differs from top-k argmax");
}

// ---------------------------------------------------------------------------

void a6_attribution(Outcome& out) {
  std::mt19937_64 rng(66);
  double worst_row = 0.0, worst_decay = 0.0;
  int asymmetric = 0, bad_diagonal = 0, negative = 0;
  for (int i = 0; i < 100; ++i) {
    const Arch arch = i % 2 ? Arch::kDecoderOnly : Arch::kEncoderDecoder;
    const int heads = 1 + static_cast<int>(rng() % 2);
    const int layers = 1 + static_cast<int>(rng() % 2);
    const auto cfg = testing::tiny_config(arch, static_cast<std::uint64_t>(1000 + i), 15,
                                          8 * heads, heads, layers);
    const auto p = init_params(cfg);
    const auto src = testing::random_tokens(rng, 2 + rng() % 6, 15);
    const auto tgt = testing::random_tokens(rng, 2 + rng() % 6, 15);
    const auto m = contribution_matrix(p, src, tgt);
    for (std::size_t r = 0; r < m.values.rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < m.values.cols; ++c) {
        s += m.values.at(r, c);
        negative += m.values.at(r, c) < 0.0;
      }
      worst_row = std::max(worst_row, std::abs(s - 1.0));
    }
    const double temp = 0.5 + static_cast<double>(rng() % 100) / 10.0;
    ad::NoGradGuard guard;
    const auto att = attenuation_matrices(forward_teacher_forced(p, src, tgt), temp);
    const std::size_t n = att.similarity.rows;
    for (std::size_t a = 0; a < n; ++a) {
      bad_diagonal += att.similarity.at(a, a) != 1.0 || att.decay.at(a, a) != 1.0;
      for (std::size_t b = 0; b < n; ++b) {
        asymmetric += att.similarity.at(a, b) != att.similarity.at(b, a) ||
                      att.decay.at(a, b) != att.decay.at(b, a);
        const double expected = std::exp(-std::abs(static_cast<double>(a) - static_cast<double>(b)) / temp);
        worst_decay = std::max(worst_decay, std::abs(att.decay.at(a, b) - expected));
      }
    }
  }
  out.detail << " max|rowsum-1|=" << sci(worst_row) << " negative=" << negative
             << " asymmetric=" << asymmetric << " bad_diagonal=" << bad_diagonal
             << " max decay error=" << sci(worst_decay);
  out.require(worst_row <= 1e-9, "contribution rows not stochastic");
  out.require(negative == 0, "negative contribution");
  out.require(asymmetric == 0, "attenuation matrix not symmetric");
  out.require(bad_diagonal == 0, "attenuation diagonal not 1");
  out.require(worst_decay <= 1e-12, "decay matrix off analytic values");
}

// ---------------------------------------------------------------------------

void a7_adjacent_similarity(Outcome& out) {
  // Overfit a small model on targets made of token runs ("x x x y y ...").
  Vocab vocab = build_vocab({"a b c d e f g h p q r s"}, 64);
  std::mt19937_64 rng(77);
  const std::vector<std::string> words{"p", "q", "r", "s"};
  std::vector<CorpusPair> pairs;
  const std::vector<std::string> sources{"a b", "c d", "e f", "g h", "a c", "b d", "e g", "f h"};
  for (const auto& src : sources) {
    std::string ref;
    for (int run = 0; run < 3; ++run) {
      const auto& w = words[rng() % words.size()];
      const int len = 2 + static_cast<int>(rng() % 3);
      for (int k = 0; k < len; ++k) ref += (ref.empty() ? "" : " ") + w;
    }
    pairs.push_back({src, ref, std::nullopt, std::nullopt});
  }
  const auto data = encode_pairs(vocab, pairs);
  ModelConfig mc = testing::tiny_config(Arch::kEncoderDecoder, 7, static_cast<int>(vocab.size()), 32, 2, 2);
  TrainConfig tc;
  tc.epochs = 150;
  tc.batch_size = 4;
  tc.learning_rate = 0.05;
  const auto trained = train(mc, tc, data);
  const double acc = token_accuracy(trained.state.params, data);

  std::size_t same_n = 0, diff_n = 0;
  double same = 0.0, diff = 0.0;
  DecodeConfig dc;
  dc.max_new_tokens = 20;
  for (const auto& ex : data) {
    const auto generated = decode(trained.state.params, ex.src, dc).tokens;
    if (generated.size() < 2) continue;
    ad::NoGradGuard guard;
    const auto trace = forward_teacher_forced(trained.state.params, ex.src, generated);
    const auto adj = adjacent_similarity(trace, generated);
    same += adj.same_token_mean * adj.same_token_pairs;
    diff += adj.different_token_mean * adj.different_token_pairs;
    same_n += adj.same_token_pairs;
    diff_n += adj.different_token_pairs;
  }
  const double same_mean = same_n ? same / same_n : 0.0;
  const double diff_mean = diff_n ? diff / diff_n : 0.0;
  out.detail.precision(4);
  out.detail << " train token acc=" << acc << " same-token mean cos=" << same_mean << " (" << same_n
             << " pairs) different-token mean cos=" << diff_mean << " (" << diff_n << " pairs)";
  out.require(same_n > 0 && diff_n > 0, "generated output lacks both pair types");
  out.require(same_mean > diff_mean, "same-token similarity not above different-token");
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void a8_reproducibility(Outcome& out) {
  const fs::path root = fs::temp_directory_path() / "repsup_acceptance_a8";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path cfg = root / "config.json";
  std::ofstream(cfg) << R"({
    "model": {"d_model": 16, "n_heads": 2, "n_layers": 1, "max_len": 48, "seed": 3},
    "train": {"epochs": 2, "batch_size": 8, "learning_rate": 0.02, "seed": 3},
    "decode": {"max_new_tokens": 20, "seed": 3},
    "data": {"n_pairs": 120, "seed": 3, "vocab_size": 128},
    "compare": ["CE", "CT", "CTSD"]
  })";
  bool ok = true;
  for (const char* run : {"run1", "run2"}) {
    ok = ok && cli::cli_main({"repsup", "compare", "-c", cfg.string(), "-o",
                              (root / run).string()}) == 0;
  }
  out.require(ok, "compare exited non-zero");
  bool identical = ok;
  for (const char* f : {"compare.csv", "compare.md", "hyp_CE.jsonl", "hyp_CT.jsonl", "hyp_CTSD.jsonl"}) {
    const auto a = slurp(root / "run1" / f), b = slurp(root / "run2" / f);
    identical = identical && !a.empty() && a == b;
  }
  const auto csv = slurp(root / "run1" / "compare.csv");
  const std::string header = csv.substr(0, csv.find('\n'));
  const std::string expected =
      "Method,BLEU (add-1)↑,Rouge-L↑,rep-2↓,rep-3↓,rep-w↓,rep-r↓,div↑";
  const bool rows_in_order = csv.find("\nCE,") < csv.find("\nCT,") &&
                             csv.find("\nCT,") < csv.find("\nCTSD,") &&
                             csv.find("\nCTSD,") != std::string::npos;
  out.detail << " identical=" << (identical ? "yes" : "no") << " header=\"" << header << "\"";
  out.require(identical, "reports differ between runs");
  out.require(header == expected, "column order");
  out.require(rows_in_order, "row order");
  fs::remove_all(root);
}

// ---------------------------------------------------------------------------

void a9_bleu_rouge(Outcome& out) {
  const auto pairs = gen_synthetic({9, 200, 0.5});
  Corpus refs;
  for (const auto& p : pairs) refs.push_back(tokenize(p.ref));
  const double b = bleu(refs, refs);
  const double r = corpus_rouge_l(refs, refs);
  const double frozen = bleu({tokenize("the the the cat")}, {tokenize("the cat sat")});
  const double expected = 100.0 * std::pow(1.0 / 24.0, 0.25);
  out.detail.precision(12);
  out.detail << " identity BLEU=" << b << " ROUGE-L=" << r << " frozen BLEU=" << frozen
             << " (expected " << expected << ")";
  out.require(std::abs(b - 100.0) < 1e-9, "identity BLEU");
  out.require(std::abs(r - 1.0) < 1e-12, "identity ROUGE-L");
  out.require(std::abs(frozen - expected) < 1e-9, "frozen BLEU case");
}

}  // namespace
}  // namespace repsup

int main(int argc, char** argv) {
  using namespace repsup;
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"A1", a1_gradients},      {"A2", a2_metric_oracles}, {"A3", a3_ctsd_vs_ct},
      {"A4", a4_training},       {"A5", a5_decoding},       {"A6", a6_attribution},
      {"A7", a7_adjacent_similarity}, {"A8", a8_reproducibility}, {"A9", a9_bleu_rouge}};
  std::string only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--only A1..A9]\n";
      return 2;
    }
  }
  bool all = true, ran = false;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && only != name) continue;
    ran = true;
    Outcome o;
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    std::cout << name << ' ' << (o.pass ? "PASS" : "FAIL") << o.detail.str() << std::endl;
    all = all && o.pass;
  }
  if (!ran) {
    std::cerr << "unknown criterion '" << only << "'\n";
    return 2;
  }
  return all ? 0 : 1;
}
