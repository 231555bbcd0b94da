// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0

#include "repsup/trainer.h"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace repsup {

namespace {

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::int64_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
  return perm;
}

std::string describe_batch(std::int64_t step, const std::vector<std::size_t>& batch) {
  std::ostringstream os;
  os << "non-finite loss at step " << step << " (batch examples:";
  for (auto i : batch) os << ' ' << i;
  os << ')';
  return os.str();
}

}  // namespace

void TrainConfig::validate() const {
  loss.validate();
  if (batch_size <= 0) throw ConfigError("train.batch_size", "must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate", "must be positive");
  if (epochs <= 0) throw ConfigError("train.epochs", "must be positive");
  if (eval_every < 0) throw ConfigError("train.eval_every", "must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum", "must lie in [0, 1)");
  if (!(clip_norm >= 0.0)) throw ConfigError("train.clip_norm", "must be >= 0");
}

TrainingDiverged::TrainingDiverged(std::int64_t step, std::vector<std::size_t> batch)
    : std::runtime_error(describe_batch(step, batch)), step_(step), batch_(std::move(batch)) {}

std::vector<Example> encode_pairs(const Vocab& vocab, const std::vector<CorpusPair>& pairs) {
  std::vector<Example> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({vocab.encode(p.src), encode_target(vocab, p.ref)});
  return out;
}

TrainState initial_state(const ModelConfig& config) {
  TrainState s{init_params(config), {}, 0};
  for (const auto& [name, t] : s.params.named_parameters()) {
    s.momentum.emplace_back(t.size(), 0.0);
  }
  return s;
}

std::int64_t steps_per_epoch(std::size_t n_examples, int batch_size) {
  const auto b = static_cast<std::size_t>(batch_size);
  return static_cast<std::int64_t>((n_examples + b - 1) / b);
}

std::vector<std::size_t> batch_indices(std::size_t n_examples, const TrainConfig& cfg,
                                       std::int64_t step) {
  const std::int64_t spe = steps_per_epoch(n_examples, cfg.batch_size);
  const std::int64_t epoch = step / spe;
  const auto offset = static_cast<std::size_t>(step % spe) * static_cast<std::size_t>(cfg.batch_size);
  const auto perm = epoch_permutation(n_examples, cfg.seed, epoch);
  const std::size_t end = std::min(n_examples, offset + static_cast<std::size_t>(cfg.batch_size));
  return {perm.begin() + static_cast<std::ptrdiff_t>(offset),
          perm.begin() + static_cast<std::ptrdiff_t>(end)};
}

TrainResult train(TrainState state, const TrainConfig& cfg, const std::vector<Example>& data,
                  const TrainHooks& hooks) {
  cfg.validate();
  state.params.config.validate();
  if (data.empty()) throw InputError("train: empty corpus");
  auto named = state.params.named_parameters();
  if (state.momentum.empty()) {
    for (const auto& [name, t] : named) state.momentum.emplace_back(t.size(), 0.0);
  }
  if (state.momentum.size() != named.size()) {
    throw InputError("train: optimizer state does not match the model");
  }

  TrainResult result;
  const std::int64_t spe = steps_per_epoch(data.size(), cfg.batch_size);
  const std::int64_t total_steps = spe * cfg.epochs;
  while (state.step < total_steps) {
    if (hooks.stop_after_steps && state.step >= *hooks.stop_after_steps) break;
    const auto batch = batch_indices(data.size(), cfg, state.step);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    state.params.zero_grad();

    LogRow row;
    row.step = state.step;
    row.epoch = static_cast<int>(state.step / spe);
    for (auto idx : batch) {
      const auto& ex = data[idx];
      LossBreakdown loss;
      try {
        const auto trace = forward_teacher_forced(state.params, ex.src, ex.tgt);
        loss = total_loss(trace, ex.tgt, cfg.loss);
      } catch (const ad::DomainError&) {
        // Overflowed parameters surface here before any loss exists.
        throw TrainingDiverged(state.step, batch);
      }
      const double total = loss.total.item();
      if (!std::isfinite(total)) throw TrainingDiverged(state.step, batch);
      row.ce += loss.ce.item() * inv_b;
      row.aux += loss.aux.item() * inv_b;
      row.total += total * inv_b;
      ad::scale(loss.total, inv_b).backward();
    }

    double scale = 1.0;
    if (cfg.clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& [name, t] : named) {
        for (double g : t.grad()) sq += g * g;
      }
      const double norm = std::sqrt(sq);
      if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
      auto& t = named[i].second;
      auto& v = state.momentum[i];
      const auto g = t.grad();
      auto p = t.mutable_values();
      for (std::size_t k = 0; k < v.size(); ++k) {
        v[k] = cfg.momentum * v[k] + scale * g[k];
        p[k] -= cfg.learning_rate * v[k];
      }
    }
    ++state.step;
    result.log.push_back(row);
    if (cfg.eval_every > 0 && hooks.on_eval && state.step % cfg.eval_every == 0) {
      hooks.on_eval(state.step, state.params);
    }
  }
  state.params.zero_grad();
  result.state = std::move(state);
  return result;
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const std::vector<Example>& data, const TrainHooks& hooks) {
  model_cfg.validate();
  return train(initial_state(model_cfg), cfg, data, hooks);
}

std::string training_log_csv(const std::vector<LogRow>& log) {
  std::ostringstream os;
  os << "step,epoch,ce_loss,aux_loss,total\n" << std::setprecision(17);
  for (const auto& r : log) {
    os << r.step << ',' << r.epoch << ',' << r.ce << ',' << r.aux << ',' << r.total << '\n';
  }
  return os.str();
}

double token_accuracy(const ModelParams& params, const std::vector<Example>& data) {
  ad::NoGradGuard guard;
  std::size_t hits = 0, total = 0;
  for (const auto& ex : data) {
    const auto trace = forward_teacher_forced(params, ex.src, ex.tgt);
    const auto vocab = trace.logits.cols();
    const auto logits = trace.logits.values();
    for (std::size_t t = 0; t < ex.tgt.size(); ++t) {
      const auto row = logits.subspan(t * vocab, vocab);
      const auto best = std::max_element(row.begin(), row.end()) - row.begin();
      if (static_cast<TokenId>(best) == ex.tgt[t]) ++hits;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

std::vector<std::string> decode_corpus(const ModelParams& params, const Vocab& vocab,
                                       const std::vector<CorpusPair>& pairs,
                                       const DecodeConfig& cfg) {
  std::vector<std::string> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back(vocab.decode(decode(params, vocab.encode(p.src), cfg).tokens));
  }
  return out;
}

MetricsReport evaluate_hypotheses(const std::vector<std::string>& hypotheses,
                                  const std::vector<CorpusPair>& pairs,
                                  const MetricsOptions& options) {
  if (hypotheses.size() != pairs.size()) {
    throw InputError("evaluate: hypothesis and reference counts differ");
  }
  Corpus hyp, ref;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    hyp.push_back(tokenize(hypotheses[i]));
    ref.push_back(tokenize(pairs[i].ref));
  }
  return evaluate(hyp, ref, options);
}

RunOutcome train_and_evaluate(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                              const ExperimentData& data, const DecodeConfig& decode_cfg,
                              const MetricsOptions& metrics) {
  RunOutcome out;
  out.training = train(model_cfg, train_cfg, data.train);
  out.hypotheses = decode_corpus(out.training.state.params, data.vocab, data.eval, decode_cfg);
  out.report = evaluate_hypotheses(out.hypotheses, data.eval, metrics);
  return out;
}

std::vector<SweepCell> sweep(const ModelConfig& model_cfg, const TrainConfig& base,
                             const SweepGrid& grid, const ExperimentData& data,
                             const DecodeConfig& decode_cfg, const MetricsOptions& metrics) {
  if (grid.weights.empty() || grid.windows.empty() || grid.temperatures.empty()) {
    throw ConfigError("sweep.grid", "every axis needs at least one value");
  }
  std::vector<SweepCell> cells;
  for (double w : grid.weights) {
    for (int n : grid.windows) {
      for (double t : grid.temperatures) {
        SweepCell cell{w, n, t, std::nullopt, {}};
        TrainConfig cfg = base;
        cfg.loss.kind = LossKind::kCTSD;
        cfg.loss.weight = w;
        cfg.loss.window = n;
        cfg.loss.temperature = t;
        try {
          cell.report = train_and_evaluate(model_cfg, cfg, data, decode_cfg, metrics).report;
        } catch (const std::exception& e) {
          cell.error = e.what();
        }
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

}  // namespace repsup
