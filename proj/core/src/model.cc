// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0

#include "repsup/model.h"

#include <cmath>
#include <functional>
#include <limits>
#include <random>

namespace repsup {

namespace {

using ad::Tensor;

constexpr double kInitStd = 0.02;

void visit_parameters(ModelParams& p,
                      const std::function<void(const std::string&, Tensor&)>& fn) {
  const auto attn = [&fn](const std::string& prefix, AttentionWeights& a) {
    fn(prefix + ".wq", a.wq);
    fn(prefix + ".bq", a.bq);
    fn(prefix + ".wk", a.wk);
    fn(prefix + ".bk", a.bk);
    fn(prefix + ".wv", a.wv);
    fn(prefix + ".bv", a.bv);
    fn(prefix + ".wo", a.wo);
    fn(prefix + ".bo", a.bo);
  };
  const auto norm = [&fn](const std::string& prefix, LayerNormWeights& n) {
    fn(prefix + ".gamma", n.gamma);
    fn(prefix + ".beta", n.beta);
  };
  const auto ffn = [&fn](const std::string& prefix, FeedForwardWeights& f) {
    fn(prefix + ".w1", f.w1);
    fn(prefix + ".b1", f.b1);
    fn(prefix + ".w2", f.w2);
    fn(prefix + ".b2", f.b2);
  };

  fn("embedding", p.embedding);
  for (std::size_t i = 0; i < p.encoder.size(); ++i) {
    const std::string prefix = "encoder." + std::to_string(i);
    auto& layer = p.encoder[i];
    norm(prefix + ".ln_attn", layer.ln_attn);
    attn(prefix + ".self_attn", layer.self_attn);
    norm(prefix + ".ln_ffn", layer.ln_ffn);
    ffn(prefix + ".ffn", layer.ffn);
  }
  if (!p.encoder.empty()) norm("encoder_norm", p.encoder_norm);
  const bool cross = p.config.arch == Arch::kEncoderDecoder;
  for (std::size_t i = 0; i < p.decoder.size(); ++i) {
    const std::string prefix = "decoder." + std::to_string(i);
    auto& layer = p.decoder[i];
    norm(prefix + ".ln_self", layer.ln_self);
    attn(prefix + ".self_attn", layer.self_attn);
    if (cross) {
      norm(prefix + ".ln_cross", layer.ln_cross);
      attn(prefix + ".cross_attn", layer.cross_attn);
    }
    norm(prefix + ".ln_ffn", layer.ln_ffn);
    ffn(prefix + ".ffn", layer.ffn);
  }
  norm("decoder_norm", p.decoder_norm);
  if (!p.config.tie_output_embedding) fn("output", p.output);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Shape of every parameter, determined by its name.
ad::Shape parameter_shape(const std::string& name, const ModelConfig& c) {
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto f = static_cast<std::size_t>(c.ffn_dim());
  const auto v = static_cast<std::size_t>(c.vocab_size);
  if (name == "embedding" || name == "output") return {v, d};
  if (ends_with(name, ".w1")) return {d, f};
  if (ends_with(name, ".b1")) return {1, f};
  if (ends_with(name, ".w2")) return {f, d};
  if (ends_with(name, ".wq") || ends_with(name, ".wk") || ends_with(name, ".wv") ||
      ends_with(name, ".wo")) {
    return {d, d};
  }
  return {1, d};
}

Tensor positions_tensor(const std::vector<double>& table, std::size_t d,
                        std::size_t begin, std::size_t count) {
  std::vector<double> rows(table.begin() + static_cast<std::ptrdiff_t>(begin * d),
                           table.begin() + static_cast<std::ptrdiff_t>((begin + count) * d));
  return Tensor::from({count, d}, std::move(rows));
}

Tensor norm(const Tensor& x, const LayerNormWeights& w) {
  return ad::layer_norm_rows(x, w.gamma, w.beta);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return ad::add_row(ad::matmul(x, w), b);
}

Tensor feed_forward(const Tensor& x, const FeedForwardWeights& w) {
  return linear(ad::gelu(linear(x, w.w1, w.b1)), w.w2, w.b2);
}

struct AttentionResult {
  Tensor output;        // queries x d_model
  Tensor mean_weights;  // queries x keys, averaged over heads
};

AttentionResult attend(const Tensor& query_in, const Tensor& key_in,
                       const AttentionWeights& w, const ModelConfig& config,
                       bool causal, AttentionRecord* record, bool decompose,
                       const Tensor& residual) {
  const auto heads = static_cast<std::size_t>(config.n_heads);
  const auto dh = static_cast<std::size_t>(config.head_dim());
  const auto d = static_cast<std::size_t>(config.d_model);
  const std::size_t nq = query_in.rows(), nk = key_in.rows();

  const Tensor q = linear(query_in, w.wq, w.bq);
  const Tensor k = linear(key_in, w.wk, w.bk);
  const Tensor v = linear(key_in, w.wv, w.bv);

  std::vector<std::uint8_t> mask;
  if (causal) {
    mask.assign(nq * nk, 0);
    for (std::size_t i = 0; i < nq; ++i) {
      for (std::size_t j = i + 1; j < nk; ++j) mask[i * nk + j] = 1;
    }
  }

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> head_out, head_weights;
  head_out.reserve(heads);
  head_weights.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = ad::slice_cols(q, h * dh, (h + 1) * dh);
    const Tensor kh = ad::slice_cols(k, h * dh, (h + 1) * dh);
    const Tensor vh = ad::slice_cols(v, h * dh, (h + 1) * dh);
    Tensor scores = ad::scale(ad::matmul_nt(qh, kh), inv_sqrt);
    if (causal) {
      scores = ad::masked_fill(scores, mask, -std::numeric_limits<double>::infinity());
    }
    Tensor weights = ad::softmax_rows(scores);
    head_out.push_back(ad::matmul(weights, vh));
    head_weights.push_back(weights);
  }

  Tensor mean_weights = head_weights[0];
  for (std::size_t h = 1; h < heads; ++h) {
    mean_weights = ad::add(mean_weights, head_weights[h]);
  }
  if (heads > 1) mean_weights = ad::scale(mean_weights, 1.0 / static_cast<double>(heads));

  Tensor output = linear(ad::concat_cols(head_out), w.wo, w.bo);

  if (record != nullptr) {
    record->heads = heads;
    record->queries = nq;
    record->keys = nk;
    record->weights.clear();
    record->weights.reserve(heads * nq * nk);
    for (const auto& hw : head_weights) {
      record->weights.insert(record->weights.end(), hw.values().begin(),
                             hw.values().end());
    }
    if (decompose) {
      record->residual.assign(residual.values().begin(), residual.values().end());
      record->projected_values.assign(heads * nk * d, 0.0);
      const auto vals = v.values();
      const auto wo = w.wo.values();
      for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t j = 0; j < nk; ++j) {
          double* dst = record->projected_values.data() + (h * nk + j) * d;
          for (std::size_t a = 0; a < dh; ++a) {
            const double x = vals[j * d + h * dh + a];
            const double* wrow = wo.data() + (h * dh + a) * d;
            for (std::size_t b = 0; b < d; ++b) dst[b] += x * wrow[b];
          }
        }
      }
    }
  }
  return {std::move(output), std::move(mean_weights)};
}

void validate_tokens(const TokenSeq& tokens, const ModelConfig& config,
                     const char* what) {
  if (tokens.empty()) throw InputError(std::string(what) + " sequence is empty");
  for (auto id : tokens) {
    if (id < 0 || id >= config.vocab_size) {
      throw InputError(std::string(what) + " token id " + std::to_string(id) +
                       " outside vocabulary of size " +
                       std::to_string(config.vocab_size));
    }
  }
}

AttentionRecord* new_record(std::vector<AttentionRecord>& records,
                            AttentionKind kind, int layer) {
  AttentionRecord rec;
  rec.kind = kind;
  rec.layer = layer;
  records.push_back(std::move(rec));
  return &records.back();
}

Tensor embed(const ModelParams& p, const TokenSeq& ids,
             const std::vector<double>& positions) {
  const auto d = static_cast<std::size_t>(p.config.d_model);
  const Tensor tokens = ad::scale(ad::embedding(p.embedding, ids),
                                  std::sqrt(static_cast<double>(d)));
  return ad::add(tokens, positions_tensor(positions, d, 0, ids.size()));
}

Tensor mean_of(const std::vector<Tensor>& xs) {
  Tensor acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = ad::add(acc, xs[i]);
  if (xs.size() > 1) acc = ad::scale(acc, 1.0 / static_cast<double>(xs.size()));
  return acc;
}

ForwardTrace run_encoder_decoder(const ModelParams& p, const TokenSeq& src,
                                 const TokenSeq& dec_in,
                                 const ForwardOptions& options) {
  const auto& c = p.config;
  if (src.size() > static_cast<std::size_t>(c.max_len) ||
      dec_in.size() > static_cast<std::size_t>(c.max_len)) {
    throw InputError("sequence longer than max_len " + std::to_string(c.max_len));
  }
  const auto positions = sinusoidal_positions(c.max_len, c.d_model);
  ForwardTrace trace;
  trace.source_len = src.size();
  trace.attention.reserve(static_cast<std::size_t>(3 * c.n_layers));
  const bool decompose = options.retain_decomposition;

  Tensor x = embed(p, src, positions);
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    const auto& layer = p.encoder[l];
    const Tensor n = norm(x, layer.ln_attn);
    auto* rec = new_record(trace.attention, AttentionKind::kEncoderSelf,
                           static_cast<int>(l));
    x = ad::add(x, attend(n, n, layer.self_attn, c, false, rec, decompose, x).output);
    x = ad::add(x, feed_forward(norm(x, layer.ln_ffn), layer.ffn));
  }
  const Tensor memory = norm(x, p.encoder_norm);

  Tensor y = embed(p, dec_in, positions);
  std::vector<Tensor> cross_means;
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    const auto& layer = p.decoder[l];
    const Tensor ns = norm(y, layer.ln_self);
    auto* rs = new_record(trace.attention, AttentionKind::kDecoderSelf,
                          static_cast<int>(l));
    y = ad::add(y, attend(ns, ns, layer.self_attn, c, true, rs, decompose, y).output);
    const Tensor nc = norm(y, layer.ln_cross);
    auto* rc = new_record(trace.attention, AttentionKind::kCross,
                          static_cast<int>(l));
    auto cross = attend(nc, memory, layer.cross_attn, c, false, rc, decompose, y);
    y = ad::add(y, cross.output);
    cross_means.push_back(cross.mean_weights);
    y = ad::add(y, feed_forward(norm(y, layer.ln_ffn), layer.ffn));
  }
  trace.hidden = norm(y, p.decoder_norm);
  trace.logits = ad::matmul_nt(trace.hidden, p.output);
  trace.atten = c.attn_source == AttnSource::kFinalLayer ? cross_means.back()
                                                         : mean_of(cross_means);
  return trace;
}

ForwardTrace run_decoder_only(const ModelParams& p, const TokenSeq& src,
                              const TokenSeq& dec_in,
                              const ForwardOptions& options) {
  const auto& c = p.config;
  const std::size_t s = src.size();
  const std::size_t total = s + 1 + dec_in.size();
  if (total > static_cast<std::size_t>(c.max_len)) {
    throw InputError("prompt plus target (" + std::to_string(total) +
                     " tokens) exceeds max_len " + std::to_string(c.max_len));
  }
  TokenSeq seq;
  seq.reserve(total);
  seq.push_back(kBos);
  seq.insert(seq.end(), src.begin(), src.end());
  seq.push_back(kSep);
  seq.insert(seq.end(), dec_in.begin() + 1, dec_in.end());

  const auto positions = sinusoidal_positions(c.max_len, c.d_model);
  ForwardTrace trace;
  trace.source_len = s;
  trace.target_offset = s + 1;
  trace.attention.reserve(static_cast<std::size_t>(c.n_layers));
  const bool decompose = options.retain_decomposition;

  Tensor x = embed(p, seq, positions);
  std::vector<Tensor> self_means;
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    const auto& layer = p.decoder[l];
    const Tensor n = norm(x, layer.ln_self);
    auto* rec = new_record(trace.attention, AttentionKind::kDecoderSelf,
                           static_cast<int>(l));
    auto sa = attend(n, n, layer.self_attn, c, true, rec, decompose, x);
    x = ad::add(x, sa.output);
    self_means.push_back(sa.mean_weights);
    x = ad::add(x, feed_forward(norm(x, layer.ln_ffn), layer.ffn));
  }
  const Tensor h = norm(x, p.decoder_norm);
  trace.hidden = ad::slice_rows(h, s + 1, total);
  trace.logits = ad::matmul_nt(trace.hidden, p.output);
  const Tensor full = c.attn_source == AttnSource::kFinalLayer ? self_means.back()
                                                               : mean_of(self_means);
  trace.atten = ad::normalize_rows(
      ad::slice_cols(ad::slice_rows(full, s + 1, total), 1, s + 1));
  return trace;
}

}  // namespace

std::string to_string(Arch arch) {
  return arch == Arch::kEncoderDecoder ? "encoder_decoder" : "decoder_only";
}

std::string to_string(AttnSource source) {
  return source == AttnSource::kFinalLayer ? "final_layer" : "mean_all_layers";
}

Arch parse_arch(const std::string& name) {
  if (name == "encoder_decoder") return Arch::kEncoderDecoder;
  if (name == "decoder_only") return Arch::kDecoderOnly;
  throw ConfigError("model.arch", "unknown architecture '" + name + "'");
}

AttnSource parse_attn_source(const std::string& name) {
  if (name == "final_layer") return AttnSource::kFinalLayer;
  if (name == "mean_all_layers") return AttnSource::kMeanAllLayers;
  throw ConfigError("model.attn_source", "unknown attention source '" + name + "'");
}

void ModelConfig::validate() const {
  if (vocab_size < kNumReserved) {
    throw ConfigError("model.vocab_size", "must be at least 5 (reserved ids)");
  }
  if (d_model <= 0) throw ConfigError("model.d_model", "must be positive");
  if (n_heads <= 0) throw ConfigError("model.n_heads", "must be positive");
  if (d_model % n_heads != 0) {
    throw ConfigError("model.n_heads", "must divide d_model");
  }
  if (n_layers <= 0) throw ConfigError("model.n_layers", "must be positive");
  if (max_len <= 0) throw ConfigError("model.max_len", "must be positive");
}

std::vector<double> sinusoidal_positions(int max_len, int d_model) {
  std::vector<double> table(static_cast<std::size_t>(max_len) *
                            static_cast<std::size_t>(d_model));
  for (int pos = 0; pos < max_len; ++pos) {
    for (int i = 0; i < d_model; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / d_model);
      const double angle = pos * rate;
      table[static_cast<std::size_t>(pos * d_model + i)] =
          (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return table;
}

std::vector<std::pair<std::string, ad::Tensor>> ModelParams::named_parameters()
    const {
  std::vector<std::pair<std::string, ad::Tensor>> out;
  ModelParams view = *this;
  visit_parameters(view, [&out](const std::string& name, Tensor& t) {
    out.emplace_back(name, t);
  });
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.size();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : named_parameters()) t.zero_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;
  visit_parameters(copy, [](const std::string&, Tensor& t) {
    t = Tensor::from(t.shape(), std::vector<double>(t.values().begin(), t.values().end()),
                     t.requires_grad());
  });
  if (copy.config.tie_output_embedding) copy.output = copy.embedding;
  return copy;
}

ModelParams init_params(const ModelConfig& config) {
  config.validate();
  ModelParams p;
  p.config = config;
  const auto layers = static_cast<std::size_t>(config.n_layers);
  if (config.arch == Arch::kEncoderDecoder) p.encoder.resize(layers);
  p.decoder.resize(layers);

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, kInitStd);
  visit_parameters(p, [&](const std::string& name, Tensor& t) {
    const auto shape = parameter_shape(name, config);
    if (ends_with(name, ".gamma")) {
      t = Tensor::full(shape, 1.0, true);
    } else if (ends_with(name, ".beta") || shape[0] == 1) {
      t = Tensor::zeros(shape, true);
    } else {
      std::vector<double> v(shape[0] * shape[1]);
      for (auto& x : v) x = normal(rng);
      t = Tensor::from(shape, std::move(v), true);
    }
  });
  if (config.tie_output_embedding) p.output = p.embedding;
  return p;
}

ForwardTrace forward_prefix(const ModelParams& params, const TokenSeq& src,
                            const TokenSeq& prefix, const ForwardOptions& options) {
  validate_tokens(src, params.config, "source");
  validate_tokens(prefix, params.config, "decoder input");
  if (prefix.front() != kBos) throw InputError("decoder input must start with BOS");
  return params.config.arch == Arch::kEncoderDecoder
             ? run_encoder_decoder(params, src, prefix, options)
             : run_decoder_only(params, src, prefix, options);
}

ForwardTrace forward_teacher_forced(const ModelParams& params, const TokenSeq& src,
                                    const TokenSeq& tgt,
                                    const ForwardOptions& options) {
  validate_tokens(tgt, params.config, "target");
  TokenSeq dec_in;
  dec_in.reserve(tgt.size());
  dec_in.push_back(kBos);
  dec_in.insert(dec_in.end(), tgt.begin(), tgt.end() - 1);
  return forward_prefix(params, src, dec_in, options);
}

StepOutput forward_step(const ModelParams& params, const TokenSeq& src,
                        const TokenSeq& prefix) {
  ad::NoGradGuard guard;
  const auto trace = forward_prefix(params, src, prefix);
  const std::size_t last = trace.length() - 1;
  return {trace.logits.row_values(last), trace.hidden.row_values(last),
          trace.atten.row_values(last)};
}

}  // namespace repsup
