// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "repsup/attribution.h"
#include "repsup/corpus.h"
#include "repsup/report.h"
#include "repsup/serialization.h"

namespace repsup::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Configuration

ConfigError rebase_loss(const ConfigError& e) {
  return e.field().rfind("loss.", 0) == 0 ? e.rebased("train.loss") : e;
}

void set_dotted(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set", "expected key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &root;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) throw ConfigError(key, "empty path component");
    if (!node->is_object()) throw ConfigError(key, "parent is not an object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os << content;
  if (!os) throw InputError("write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Shared plumbing

struct Context {
  std::string command;
  std::vector<std::string> argv;
  ExperimentConfig config;
  fs::path out;
  std::vector<std::string> outputs;

  void emit(const std::string& name, const std::string& content) {
    write_file(out / name, content);
    outputs.push_back(name);
  }

  void write_manifest(const ordered_json& extra = ordered_json::object()) {
    ordered_json m;
    m["toolkit"] = "repsup";
    m["toolkit_version"] = version();
    m["command"] = command;
    m["argv"] = argv;
    m["config"] = to_json(config);
    m["seeds"] = {{"model", config.model.seed},
                  {"train", config.train.seed},
                  {"decode", config.decode.seed},
                  {"data", config.data.seed}};
    m["outputs"] = outputs;
    for (const auto& [k, v] : extra.items()) m[k] = v;
    write_file(out / (command + ".manifest.json"), m.dump(2) + "\n");
  }
};

std::vector<CorpusPair> load_or_generate(const DataConfig& data) {
  if (!data.path.empty()) return load_jsonl(data.path);
  return gen_synthetic({data.seed, data.n_pairs, data.stack_ratio});
}

std::vector<std::string> vocab_texts(const std::vector<CorpusPair>& pairs) {
  std::vector<std::string> texts;
  for (const auto& p : pairs) {
    texts.push_back(p.src);
    texts.push_back(p.ref);
  }
  return texts;
}

ExperimentData prepare_data(ExperimentConfig& cfg) {
  const auto pairs = load_or_generate(cfg.data);
  if (pairs.empty()) throw InputError("corpus is empty");
  auto split = split_corpus(pairs, cfg.data.eval_fraction);
  if (split.eval.empty()) throw InputError("held-out split is empty");
  ExperimentData data;
  data.vocab = build_vocab(vocab_texts(split.train), cfg.data.vocab_size);
  data.train = encode_pairs(data.vocab, split.train);
  data.eval = std::move(split.eval);
  cfg.model.vocab_size = static_cast<int>(data.vocab.size());
  return data;
}

std::vector<LossKind> canonical_kinds(const std::vector<std::string>& names) {
  std::vector<LossKind> kinds;
  for (const auto& n : names) {
    LossKind k;
    try {
      k = parse_loss_kind(n);
    } catch (const ConfigError& e) {
      throw ConfigError("compare", e.message());
    }
    if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
  }
  std::sort(kinds.begin(), kinds.end());
  return kinds;
}

// ---------------------------------------------------------------------------
// Subcommands

int run_gen_data(Context& ctx) {
  const auto& d = ctx.config.data;
  const auto pairs = gen_synthetic({d.seed, d.n_pairs, d.stack_ratio});
  ctx.emit("data.jsonl", to_jsonl(pairs));
  ordered_json gen;
  gen["seed"] = d.seed;
  gen["n_pairs"] = d.n_pairs;
  gen["stack_ratio"] = d.stack_ratio;
  gen["stacked_pairs"] = filter_by_tag(pairs, PairTag::kStacked).size();
  ctx.write_manifest({{"generator", gen}});
  std::cerr << "wrote " << pairs.size() << " pairs to " << (ctx.out / "data.jsonl").string() << '\n';
  return 0;
}

int run_train(Context& ctx, const std::string& resume, std::int64_t stop_after) {
  auto& cfg = ctx.config;
  const auto pairs = load_or_generate(cfg.data);
  auto split = split_corpus(pairs, cfg.data.eval_fraction);

  TrainState state;
  Vocab vocab;
  if (!resume.empty()) {
    CheckpointExtras extras;
    state.params = load_checkpoint(resume, &extras);
    state.momentum = std::move(extras.momentum);
    state.step = extras.step;
    vocab = Vocab::from_tokens(extras.vocab);
    cfg.model = state.params.config;
  } else {
    vocab = build_vocab(vocab_texts(split.train), cfg.data.vocab_size);
    cfg.model.vocab_size = static_cast<int>(vocab.size());
    cfg.model.validate();
    state = initial_state(cfg.model);
  }
  const auto train_data = encode_pairs(vocab, split.train);
  const auto eval_data = encode_pairs(vocab, split.eval);

  std::string eval_log = "step,token_accuracy\n";
  TrainHooks hooks;
  if (stop_after >= 0) hooks.stop_after_steps = stop_after;
  hooks.on_eval = [&](std::int64_t step, const ModelParams& params) {
    const double acc = eval_data.empty() ? 0.0 : token_accuracy(params, eval_data);
    eval_log += std::to_string(step) + "," + format_fixed(acc, 6) + "\n";
    std::cerr << "step " << step << " eval token accuracy " << format_fixed(acc, 4) << '\n';
  };
  auto result = train(std::move(state), cfg.train, train_data, hooks);

  CheckpointExtras extras;
  extras.vocab = vocab.tokens();
  extras.metadata_json = to_json(cfg).dump();
  extras.momentum = result.state.momentum;
  extras.step = result.state.step;
  save_checkpoint(ctx.out / "model.ckpt", result.state.params, extras);
  ctx.outputs.push_back("model.ckpt");

  const fs::path log_path = ctx.out / "train_log.csv";
  std::string log = training_log_csv(result.log);
  if (!resume.empty() && fs::exists(log_path)) {
    std::ofstream(log_path, std::ios::binary | std::ios::app) << log.substr(log.find('\n') + 1);
    ctx.outputs.push_back("train_log.csv");
  } else {
    ctx.emit("train_log.csv", log);
  }
  if (cfg.train.eval_every > 0) ctx.emit("eval_log.csv", eval_log);

  ordered_json extra;
  extra["steps"] = result.state.step;
  extra["resumed_from"] = resume;
  if (!result.log.empty()) extra["final_total_loss"] = result.log.back().total;
  ctx.write_manifest(extra);
  std::cerr << "trained to step " << result.state.step << "; checkpoint "
            << (ctx.out / "model.ckpt").string() << '\n';
  return 0;
}

int run_decode(Context& ctx, const std::string& checkpoint, const std::string& input,
               bool trace) {
  CheckpointExtras extras;
  const auto params = load_checkpoint(checkpoint, &extras);
  const auto vocab = Vocab::from_tokens(extras.vocab);
  auto pairs = load_jsonl(input);
  std::string trace_lines;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto result = decode(params, vocab.encode(pairs[i].src), ctx.config.decode);
    pairs[i].hyp = vocab.decode(result.tokens);
    if (trace) trace_lines += diagnostics_jsonl(result, i);
  }
  ctx.emit("hyp.jsonl", to_jsonl(pairs));
  if (trace) ctx.emit("decode_trace.jsonl", trace_lines);
  ctx.write_manifest({{"checkpoint", checkpoint}, {"input", input}});
  return 0;
}

int run_eval(Context& ctx, const std::string& input, const std::string& label,
             bool screening) {
  const auto pairs = load_jsonl(input);
  std::vector<std::string> hyps;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!pairs[i].hyp) {
      throw InputError(input + ": entry " + std::to_string(i + 1) + " has no \"hyp\"");
    }
    hyps.push_back(*pairs[i].hyp);
  }
  Corpus hyp, ref;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    hyp.push_back(tokenize(hyps[i]));
    ref.push_back(tokenize(pairs[i].ref));
  }
  const MetricsOptions options{ctx.config.metrics.rep_w_window};
  const auto report = screening
                          ? top_percentile_screen(hyp, ref, ctx.config.metrics.percentile, options)
                          : evaluate(hyp, ref, options);
  const auto table = metrics_table({{label, report}}, "Method", screening);
  ctx.emit("report.csv", to_csv(table));
  ctx.emit("report.md", to_markdown(table));
  ctx.write_manifest({{"input", input}, {"screening", screening}});
  std::cout << to_markdown(table);
  return 0;
}

int run_analyze(Context& ctx, const std::string& checkpoint, const std::string& input,
                std::size_t index, bool use_hyp) {
  CheckpointExtras extras;
  const auto params = load_checkpoint(checkpoint, &extras);
  const auto vocab = Vocab::from_tokens(extras.vocab);
  const auto pairs = load_jsonl(input);
  if (index >= pairs.size()) {
    throw InputError("--index " + std::to_string(index) + " is past the end of " + input);
  }
  const auto& pair = pairs[index];
  if (use_hyp && !pair.hyp) throw InputError("entry has no \"hyp\" to analyze");
  const TokenSeq src = vocab.encode(pair.src);
  const TokenSeq tgt = encode_target(vocab, use_hyp ? *pair.hyp : pair.ref);

  const auto contrib = contribution_matrix(params, src, tgt, vocab.tokens());
  const std::string title = contrib.method + " contribution";
  ctx.emit("contribution.csv", matrix_csv(contrib.values, contrib.row_labels, contrib.col_labels));
  ctx.emit("contribution.svg",
           heatmap_svg(contrib.values, contrib.row_labels, contrib.col_labels, title));

  ad::NoGradGuard guard;
  const auto trace = forward_teacher_forced(params, src, tgt);
  const auto att = attenuation_matrices(trace, ctx.config.train.loss.temperature);
  std::vector<std::string> labels;
  for (auto id : tgt) labels.push_back(vocab.token(id));
  ctx.emit("attention_similarity.csv", matrix_csv(att.similarity, labels, labels));
  ctx.emit("attention_similarity.svg",
           heatmap_svg(att.similarity, labels, labels, "attention similarity"));
  ctx.emit("decay.csv", matrix_csv(att.decay, labels, labels));
  ctx.emit("decay.svg", heatmap_svg(att.decay, labels, labels, "exponential decay"));

  const auto adj = adjacent_similarity(trace, tgt);
  ordered_json a;
  a["cosine"] = adj.cosine;
  a["same_token_mean"] = adj.same_token_mean;
  a["same_token_pairs"] = adj.same_token_pairs;
  a["different_token_mean"] = adj.different_token_mean;
  a["different_token_pairs"] = adj.different_token_pairs;
  ctx.emit("adjacent_similarity.json", a.dump(2) + "\n");
  ctx.write_manifest({{"checkpoint", checkpoint}, {"input", input}, {"index", index}});
  return 0;
}

int run_sweep(Context& ctx) {
  auto& cfg = ctx.config;
  const auto data = prepare_data(cfg);
  const SweepGrid grid{cfg.sweep.weights, cfg.sweep.windows, cfg.sweep.temperatures};
  const auto cells = sweep(cfg.model, cfg.train, grid, data, cfg.decode,
                           MetricsOptions{cfg.metrics.rep_w_window});
  const auto table = sweep_table(cells);
  ctx.emit("sweep.csv", to_csv(table));
  ctx.emit("sweep.md", to_markdown(table));
  ordered_json failures = ordered_json::array();
  for (const auto& c : cells) {
    if (!c.error.empty()) {
      failures.push_back({{"W", c.weight}, {"N", c.window}, {"T", c.temperature},
                          {"error", c.error}});
    }
  }
  ctx.write_manifest({{"failed_cells", failures}});
  std::cout << to_markdown(table);
  return 0;
}

int run_compare(Context& ctx) {
  auto& cfg = ctx.config;
  const auto kinds = canonical_kinds(cfg.compare);
  const auto data = prepare_data(cfg);
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (LossKind kind : kinds) {
    TrainConfig tc = cfg.train;
    tc.loss.kind = kind;
    std::cerr << "compare: training " << to_string(kind) << '\n';
    const auto run = train_and_evaluate(cfg.model, tc, data, cfg.decode,
                                        MetricsOptions{cfg.metrics.rep_w_window});
    auto pairs = data.eval;
    for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i].hyp = run.hypotheses[i];
    ctx.emit("hyp_" + to_string(kind) + ".jsonl", to_jsonl(pairs));
    rows.emplace_back(to_string(kind), run.report);
  }
  const auto table = metrics_table(rows, "Method");
  ctx.emit("compare.csv", to_csv(table));
  ctx.emit("compare.md", to_markdown(table));
  ctx.write_manifest();
  std::cout << to_markdown(table);
  return 0;
}

void print_error(const char* kind, const std::string& message, const std::string& field = {}) {
  ordered_json e;
  e["error"] = kind;
  if (!field.empty()) e["field"] = field;
  e["message"] = message;
  std::cerr << e.dump() << '\n';
}

}  // namespace

// ---------------------------------------------------------------------------
// Config JSON

void ExperimentConfig::validate() const {
  model.validate();
  try {
    train.validate();
  } catch (const ConfigError& e) {
    throw rebase_loss(e);
  }
  decode.validate();
  if (metrics.rep_w_window < 1) throw ConfigError("metrics.rep_w_window", "must be >= 1");
  if (!(metrics.percentile > 0.0 && metrics.percentile <= 100.0)) {
    throw ConfigError("metrics.percentile", "must lie in (0, 100]");
  }
  if (data.path.empty() && data.n_pairs == 0) throw ConfigError("data.n_pairs", "must be positive");
  if (!(data.stack_ratio >= 0.0 && data.stack_ratio <= 1.0)) {
    throw ConfigError("data.stack_ratio", "must lie in [0, 1]");
  }
  if (!(data.eval_fraction > 0.0 && data.eval_fraction < 1.0)) {
    throw ConfigError("data.eval_fraction", "must lie in (0, 1)");
  }
  if (data.vocab_size <= static_cast<std::size_t>(kNumReserved)) {
    throw ConfigError("data.vocab_size", "must exceed the 5 reserved ids");
  }
  if (sweep.weights.empty()) throw ConfigError("sweep.W", "needs at least one value");
  if (sweep.windows.empty()) throw ConfigError("sweep.N", "needs at least one value");
  if (sweep.temperatures.empty()) throw ConfigError("sweep.T", "needs at least one value");
  if (compare.empty()) throw ConfigError("compare", "needs at least one loss kind");
  canonical_kinds(compare);
  if (out_dir.empty()) throw ConfigError("out_dir", "must not be empty");
}

ordered_json to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["model"] = repsup::to_json(c.model);
  j["train"] = repsup::to_json(c.train);
  j["decode"] = repsup::to_json(c.decode);
  j["metrics"] = {{"rep_w_window", c.metrics.rep_w_window},
                  {"percentile", c.metrics.percentile}};
  ordered_json d;
  d["path"] = c.data.path;
  d["seed"] = c.data.seed;
  d["n_pairs"] = c.data.n_pairs;
  d["stack_ratio"] = c.data.stack_ratio;
  d["eval_fraction"] = c.data.eval_fraction;
  d["vocab_size"] = c.data.vocab_size;
  j["data"] = d;
  j["sweep"] = {{"W", c.sweep.weights}, {"N", c.sweep.windows}, {"T", c.sweep.temperatures}};
  j["compare"] = c.compare;
  j["out_dir"] = c.out_dir;
  return j;
}

ExperimentConfig experiment_from_json(const json& j) {
  require_keys(j, "config",
               {"model", "train", "decode", "metrics", "data", "sweep", "compare", "out_dir"});
  ExperimentConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j["model"], "model");
  if (j.contains("train")) c.train = train_config_from_json(j["train"], "train");
  if (j.contains("decode")) c.decode = decode_config_from_json(j["decode"], "decode");
  if (j.contains("metrics")) {
    const auto& m = j["metrics"];
    require_keys(m, "metrics", {"rep_w_window", "percentile"});
    read_field(m, "metrics", "rep_w_window", c.metrics.rep_w_window);
    read_field(m, "metrics", "percentile", c.metrics.percentile);
  }
  if (j.contains("data")) {
    const auto& d = j["data"];
    require_keys(d, "data",
                 {"path", "seed", "n_pairs", "stack_ratio", "eval_fraction", "vocab_size"});
    read_field(d, "data", "path", c.data.path);
    read_field(d, "data", "seed", c.data.seed);
    read_field(d, "data", "n_pairs", c.data.n_pairs);
    read_field(d, "data", "stack_ratio", c.data.stack_ratio);
    read_field(d, "data", "eval_fraction", c.data.eval_fraction);
    read_field(d, "data", "vocab_size", c.data.vocab_size);
  }
  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    require_keys(s, "sweep", {"W", "N", "T"});
    read_field(s, "sweep", "W", c.sweep.weights);
    read_field(s, "sweep", "N", c.sweep.windows);
    read_field(s, "sweep", "T", c.sweep.temperatures);
  }
  read_field(j, "config", "compare", c.compare);
  read_field(j, "config", "out_dir", c.out_dir);
  return c;
}

ExperimentConfig resolve_config(const std::string& config_path,
                                const std::vector<std::string>& overrides) {
  json j = to_json(ExperimentConfig{});
  if (!config_path.empty()) {
    json file;
    try {
      file = json::parse(read_file(config_path));
    } catch (const json::exception& e) {
      throw ConfigError("config", config_path + " is not valid JSON: " + e.what());
    }
    if (!file.is_object()) throw ConfigError("config", config_path + " must hold an object");
    j.merge_patch(file);
  }
  if (const char* env = std::getenv("REPL_SEED"); env && *env) {
    std::uint64_t seed = 0;
    try {
      std::size_t used = 0;
      seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw ConfigError("REPL_SEED", std::string("not an unsigned integer: '") + env + "'");
    }
    for (const char* section : {"model", "train", "decode", "data"}) j[section]["seed"] = seed;
  }
  for (const auto& o : overrides) set_dotted(j, o);
  ExperimentConfig c = experiment_from_json(j);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Entry point

int cli_main(int argc, char** argv) {
  CLI::App app{"repsup: repetition suppression toolkit for sequence-to-sequence models"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  std::string config_path, out_dir, train_data;
  std::vector<std::string> overrides;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--set", overrides, "Dotted override, e.g. train.loss.W=0.5")
        ->allow_extra_args(false);
    sub->add_option("-o,--out", out_dir, "Output directory (overrides out_dir)");
  };

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic keyword-stacked corpus");
  add_common(gen);
  std::optional<std::uint64_t> gen_seed;
  std::optional<std::size_t> gen_pairs;
  std::optional<double> gen_ratio;
  gen->add_option("--seed", gen_seed, "Generator seed (data.seed)");
  gen->add_option("--n-pairs", gen_pairs, "Number of pairs (data.n_pairs)");
  gen->add_option("--stack-ratio", gen_ratio, "Fraction of stacked titles (data.stack_ratio)");

  auto* tr = app.add_subcommand("train", "Train a model and write model.ckpt + train_log.csv");
  add_common(tr);
  std::string resume;
  std::int64_t stop_after = -1;
  tr->add_option("--data", train_data, "JSONL corpus (data.path)");
  tr->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  tr->add_option("--stop-after", stop_after, "Stop once this global step is reached");

  auto* dec = app.add_subcommand("decode", "Decode a JSONL file and write hyp.jsonl");
  add_common(dec);
  std::string checkpoint, input, strategy;
  bool trace = false;
  dec->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  dec->add_option("--input", input, "JSONL with src/ref")->required()->check(CLI::ExistingFile);
  dec->add_option("--strategy", strategy, "Decoding strategy (decode.strategy)");
  dec->add_flag("--trace-decode", trace, "Write per-step diagnostics to decode_trace.jsonl");

  auto* ev = app.add_subcommand("eval", "Score hyp.jsonl and write report.csv/report.md");
  add_common(ev);
  std::string label = "model";
  std::optional<double> percentile;
  ev->add_option("--input", input, "JSONL with src/ref/hyp")->required()->check(CLI::ExistingFile);
  ev->add_option("--label", label, "Row label in the report");
  ev->add_option("--percentile", percentile,
                 "Screen the top percentile by rep-w (metrics.percentile)");

  auto* an = app.add_subcommand("analyze", "Contribution and attenuation matrices (CSV + SVG)");
  add_common(an);
  std::size_t index = 0;
  bool use_hyp = false;
  an->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  an->add_option("--input", input, "JSONL with src/ref")->required()->check(CLI::ExistingFile);
  an->add_option("--index", index, "Line to analyze (0-based)");
  an->add_flag("--use-hyp", use_hyp, "Analyze the hypothesis instead of the reference");

  auto* sw = app.add_subcommand("sweep", "CTSD grid over W x N x T; writes sweep.csv/sweep.md");
  add_common(sw);
  sw->add_option("--data", train_data, "JSONL corpus (data.path)");

  auto* cmp = app.add_subcommand("compare", "Train+decode+eval per loss kind on one split");
  add_common(cmp);
  cmp->add_option("--data", train_data, "JSONL corpus (data.path)");

  std::vector<std::string> raw_args(argv, argv + argc);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << '\n';
    print_error("usage", e.what());
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!train_data.empty()) overrides.push_back("data.path=" + json(train_data).dump());
    if (gen_seed) overrides.push_back("data.seed=" + std::to_string(*gen_seed));
    if (gen_pairs) overrides.push_back("data.n_pairs=" + std::to_string(*gen_pairs));
    if (gen_ratio) overrides.push_back("data.stack_ratio=" + json(*gen_ratio).dump());
    if (!strategy.empty()) overrides.push_back("decode.strategy=" + json(strategy).dump());
    if (percentile) overrides.push_back("metrics.percentile=" + json(*percentile).dump());
    if (!out_dir.empty()) overrides.push_back("out_dir=" + json(out_dir).dump());

    Context ctx;
    ctx.command = sub->get_name();
    ctx.argv = raw_args;
    ctx.config = resolve_config(config_path, overrides);
    ctx.out = ctx.config.out_dir;
    fs::create_directories(ctx.out);

    const std::string& name = ctx.command;
    if (name == "gen-data") return run_gen_data(ctx);
    if (name == "train") return run_train(ctx, resume, stop_after);
    if (name == "decode") return run_decode(ctx, checkpoint, input, trace);
    if (name == "eval") return run_eval(ctx, input, label, percentile.has_value());
    if (name == "analyze") return run_analyze(ctx, checkpoint, input, index, use_hyp);
    if (name == "sweep") return run_sweep(ctx);
    if (name == "compare") return run_compare(ctx);
    print_error("usage", "unknown subcommand " + name);
    return 2;
  } catch (const ConfigError& e) {
    const auto r = rebase_loss(e);
    print_error("config", r.message(), r.field());
    return 1;
  } catch (const std::exception& e) {
    print_error("runtime", e.what());
    return 3;
  }
}

int cli_main(const std::vector<std::string>& args) {
  std::vector<std::string> copy = args;
  std::vector<char*> argv;
  for (auto& a : copy) argv.push_back(a.data());
  argv.push_back(nullptr);
  return cli_main(static_cast<int>(copy.size()), argv.data());
}

}  // namespace repsup::cli
