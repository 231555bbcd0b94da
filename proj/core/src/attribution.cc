// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0

#include "repsup/attribution.h"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "repsup/objectives.h"

namespace repsup {

namespace {

double l1(const double* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(v[i]);
  return s;
}

double l1_diff(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(a[i] - b[i]);
  return s;
}

std::string label(TokenId id, const std::vector<std::string>& id_to_token) {
  const auto i = static_cast<std::size_t>(id);
  if (id >= 0 && i < id_to_token.size()) return id_to_token[i];
  return std::to_string(id);
}

const AttentionRecord& find_record(const ForwardTrace& trace, AttentionKind kind, int layer) {
  for (const auto& r : trace.attention) {
    if (r.kind == kind && r.layer == layer) return r;
  }
  throw InputError("attribution: attention record missing from trace");
}

// Joint-space matrix for one sublayer. `offset` is where the query positions
// start in the joint space; keys map to key_offset + j.
DenseMatrix lift(const SublayerContribution& c, std::size_t joint, std::size_t query_offset,
                 std::size_t key_offset) {
  DenseMatrix m = DenseMatrix::identity(joint);
  for (std::size_t q = 0; q < c.to_keys.rows; ++q) {
    const std::size_t row = query_offset + q;
    for (std::size_t j = 0; j < joint; ++j) m.at(row, j) = 0.0;
    for (std::size_t k = 0; k < c.to_keys.cols; ++k) {
      m.at(row, key_offset + k) += c.to_keys.at(q, k);
    }
    m.at(row, row) += c.to_residual[q];
  }
  return m;
}

}  // namespace

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols != b.rows) throw InputError("multiply: inner dimensions differ");
  DenseMatrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double x = a.at(i, k);
      if (x == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) out.at(i, j) += x * b.at(k, j);
    }
  }
  return out;
}

void normalize_rows(DenseMatrix& m) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) s += m.at(i, j);
    if (s > 0.0) {
      for (std::size_t j = 0; j < m.cols; ++j) m.at(i, j) /= s;
    } else if (m.rows == m.cols) {
      m.at(i, i) = 1.0;
    }
  }
}

DenseMatrix rollout(const std::vector<DenseMatrix>& layers) {
  if (layers.empty()) throw InputError("rollout: no layers");
  DenseMatrix acc = layers.front();
  for (std::size_t l = 1; l < layers.size(); ++l) acc = multiply(layers[l], acc);
  return acc;
}

SublayerContribution sublayer_contributions(const AttentionRecord& record,
                                            std::size_t d_model, bool residual_is_key) {
  const std::size_t nq = record.queries, nk = record.keys, heads = record.heads, d = d_model;
  if (record.residual.size() != nq * d || record.projected_values.size() != heads * nk * d) {
    throw InputError("attribution: trace was produced without decomposition records");
  }
  if (residual_is_key && nq != nk) {
    throw InputError("attribution: self-attention record is not square");
  }

  SublayerContribution out{DenseMatrix(nq, nk), std::vector<double>(nq, 0.0)};
  std::vector<double> summands(nk * d), output(d), residual(d);
  for (std::size_t t = 0; t < nq; ++t) {
    std::fill(summands.begin(), summands.end(), 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t j = 0; j < nk; ++j) {
        const double a = record.weight(h, t, j);
        if (a == 0.0) continue;
        const double* pv = record.projected_values.data() + (h * nk + j) * d;
        for (std::size_t b = 0; b < d; ++b) summands[j * d + b] += a * pv[b];
      }
    }
    std::copy_n(record.residual.data() + t * d, d, residual.begin());
    if (residual_is_key) {
      for (std::size_t b = 0; b < d; ++b) summands[t * d + b] += residual[b];
      std::fill(residual.begin(), residual.end(), 0.0);
    }
    std::fill(output.begin(), output.end(), 0.0);
    for (std::size_t j = 0; j < nk; ++j) {
      for (std::size_t b = 0; b < d; ++b) output[b] += summands[j * d + b];
    }
    for (std::size_t b = 0; b < d; ++b) output[b] += residual[b];

    const double norm = l1(output.data(), d);
    double total = 0.0;
    for (std::size_t j = 0; j < nk; ++j) {
      const double r = std::max(0.0, norm - l1_diff(output.data(), summands.data() + j * d, d));
      out.to_keys.at(t, j) = r;
      total += r;
    }
    if (!residual_is_key) {
      out.to_residual[t] = std::max(0.0, norm - l1_diff(output.data(), residual.data(), d));
      total += out.to_residual[t];
    }
    if (total > 0.0) {
      for (std::size_t j = 0; j < nk; ++j) out.to_keys.at(t, j) /= total;
      out.to_residual[t] /= total;
    } else if (residual_is_key) {
      out.to_keys.at(t, t) = 1.0;
    } else {
      out.to_residual[t] = 1.0;
    }
  }
  return out;
}

ContributionMatrix contribution_matrix(const ForwardTrace& trace, const ModelConfig& config,
                                       const TokenSeq& src, const TokenSeq& tgt,
                                       const std::vector<std::string>& id_to_token) {
  const std::size_t d = static_cast<std::size_t>(config.d_model);
  const std::size_t s = src.size(), t_len = tgt.size();
  if (trace.attention.empty()) throw InputError("attribution: trace has no attention records");

  ContributionMatrix out;
  for (auto id : tgt) out.row_labels.push_back(label(id, id_to_token));

  DenseMatrix joint_map;
  std::size_t row_offset = 0;
  if (config.arch == Arch::kEncoderDecoder) {
    const std::size_t joint = s + t_len;
    std::vector<DenseMatrix> encoder_layers;
    for (int l = 0; l < config.n_layers; ++l) {
      const auto c = sublayer_contributions(
          find_record(trace, AttentionKind::kEncoderSelf, l), d, true);
      encoder_layers.push_back(c.to_keys);
    }
    const DenseMatrix enc = rollout(encoder_layers);
    DenseMatrix lifted_enc = DenseMatrix::identity(joint);
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t j = 0; j < s; ++j) lifted_enc.at(i, j) = enc.at(i, j);
    }
    std::vector<DenseMatrix> layers{lifted_enc};
    for (int l = 0; l < config.n_layers; ++l) {
      layers.push_back(lift(sublayer_contributions(
                                find_record(trace, AttentionKind::kDecoderSelf, l), d, true),
                            joint, s, s));
      layers.push_back(lift(sublayer_contributions(
                                find_record(trace, AttentionKind::kCross, l), d, false),
                            joint, s, 0));
    }
    joint_map = rollout(layers);
    row_offset = s;
    for (auto id : src) out.col_labels.push_back(label(id, id_to_token));
    out.col_labels.push_back(label(kBos, id_to_token));
    for (std::size_t i = 0; i + 1 < t_len; ++i) out.col_labels.push_back(label(tgt[i], id_to_token));
  } else {
    const std::size_t joint = s + 1 + t_len;
    std::vector<DenseMatrix> layers;
    for (int l = 0; l < config.n_layers; ++l) {
      const auto c = sublayer_contributions(
          find_record(trace, AttentionKind::kDecoderSelf, l), d, true);
      layers.push_back(lift(c, joint, 0, 0));
    }
    joint_map = rollout(layers);
    row_offset = trace.target_offset;
    out.col_labels.push_back(label(kBos, id_to_token));
    for (auto id : src) out.col_labels.push_back(label(id, id_to_token));
    out.col_labels.push_back(label(kSep, id_to_token));
    for (std::size_t i = 0; i + 1 < t_len; ++i) out.col_labels.push_back(label(tgt[i], id_to_token));
  }

  out.values = DenseMatrix(t_len, joint_map.cols);
  for (std::size_t r = 0; r < t_len; ++r) {
    for (std::size_t c = 0; c < joint_map.cols; ++c) {
      out.values.at(r, c) = joint_map.at(row_offset + r, c);
    }
  }
  normalize_rows(out.values);
  return out;
}

ContributionMatrix contribution_matrix(const ModelParams& params, const TokenSeq& src,
                                       const TokenSeq& tgt,
                                       const std::vector<std::string>& id_to_token) {
  ad::NoGradGuard guard;
  ForwardOptions options;
  options.retain_decomposition = true;
  const auto trace = forward_teacher_forced(params, src, tgt, options);
  return contribution_matrix(trace, params.config, src, tgt, id_to_token);
}

AdjacentSimilarity adjacent_similarity(const std::vector<std::vector<double>>& hidden,
                                       const TokenSeq& tokens) {
  if (hidden.size() != tokens.size()) {
    throw InputError("adjacent_similarity: hidden rows and tokens differ in length");
  }
  AdjacentSimilarity out;
  double same = 0.0, diff = 0.0;
  for (std::size_t t = 0; t + 1 < hidden.size(); ++t) {
    const double c = ad::cosine(hidden[t], hidden[t + 1]);
    out.cosine.push_back(c);
    if (tokens[t] == tokens[t + 1]) {
      same += c;
      ++out.same_token_pairs;
    } else {
      diff += c;
      ++out.different_token_pairs;
    }
  }
  if (out.same_token_pairs) out.same_token_mean = same / static_cast<double>(out.same_token_pairs);
  if (out.different_token_pairs) {
    out.different_token_mean = diff / static_cast<double>(out.different_token_pairs);
  }
  return out;
}

AdjacentSimilarity adjacent_similarity(const ForwardTrace& trace, const TokenSeq& tgt) {
  if (trace.length() != tgt.size()) {
    throw InputError("adjacent_similarity: trace rows and target differ in length");
  }
  std::vector<std::vector<double>> rows(trace.length());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = trace.hidden.row_values(i);
  // Row t reads tgt[t-1] (BOS at t = 0); that is the token it represents.
  TokenSeq inputs;
  if (!tgt.empty()) {
    inputs.push_back(kBos);
    inputs.insert(inputs.end(), tgt.begin(), tgt.end() - 1);
  }
  return adjacent_similarity(rows, inputs);
}

AttenuationMatrices attenuation_matrices(const std::vector<std::vector<double>>& atten,
                                         double temperature) {
  if (!(temperature > 0.0)) throw InputError("attenuation_matrices: T must be > 0");
  const std::size_t n = atten.size();
  AttenuationMatrices out{DenseMatrix(n, n), DenseMatrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    out.similarity.at(i, i) = 1.0;
    out.decay.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = alpha_s(atten[i], atten[j]);
      const double g = std::exp(-static_cast<double>(j - i) / temperature);
      out.similarity.at(i, j) = out.similarity.at(j, i) = s;
      out.decay.at(i, j) = out.decay.at(j, i) = g;
    }
  }
  return out;
}

AttenuationMatrices attenuation_matrices(const ForwardTrace& trace, double temperature) {
  std::vector<std::vector<double>> rows(trace.atten.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = trace.atten.row_values(i);
  return attenuation_matrices(rows, temperature);
}

DenseMatrix pca_2d(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size();
  if (n == 0) return DenseMatrix(0, 2);
  const std::size_t d = rows[0].size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  const Eigen::RowVectorXd mu = x.colwise().mean();
  x.rowwise() -= mu;
  const Eigen::MatrixXd cov = x.transpose() * x / static_cast<double>(std::max<std::size_t>(n - 1, 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  DenseMatrix out(n, 2);
  const auto dims = static_cast<Eigen::Index>(d);
  for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, dims); ++c) {
    Eigen::VectorXd v = solver.eigenvectors().col(dims - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    const Eigen::VectorXd proj = x * v;
    for (std::size_t i = 0; i < n; ++i) {
      out.at(i, static_cast<std::size_t>(c)) = proj(static_cast<Eigen::Index>(i));
    }
  }
  return out;
}

}  // namespace repsup
