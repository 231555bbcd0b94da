// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "repsup/tensor.h"

namespace repsup::ad {

namespace {

using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

using BackwardFn = std::function<void(Node&)>;

ConstMap as_matrix(const std::vector<double>& v, std::size_t r, std::size_t c) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(r),
                  static_cast<Eigen::Index>(c));
}

MutMap as_matrix(std::vector<double>& v, std::size_t r, std::size_t c) {
  return MutMap(v.data(), static_cast<Eigen::Index>(r),
                static_cast<Eigen::Index>(c));
}

Tensor record(const char* op, Shape shape, std::vector<double> value,
              std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->shape = std::move(shape);
  node->grad.assign(value.size(), 0.0);
  node->value = std::move(value);
  bool needs = false;
  if (!NoGradGuard::active()) {
    for (const auto* t : inputs) needs = needs || t->requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto* t : inputs) node->parents.push_back(t->node());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

Tensor record_many(const char* op, Shape shape, std::vector<double> value,
                   std::span<const Tensor> inputs, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->shape = std::move(shape);
  node->grad.assign(value.size(), 0.0);
  node->value = std::move(value);
  bool needs = false;
  if (!NoGradGuard::active()) {
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

bool wants(const Node& self, std::size_t i) {
  return self.parents[i]->requires_grad;
}

std::vector<double>& pgrad(Node& self, std::size_t i) {
  return self.parents[i]->grad;
}

const std::vector<double>& pvalue(const Node& self, std::size_t i) {
  return self.parents[i]->value;
}

void require_defined(const char* op, const Tensor& t) {
  if (!t.defined()) throw ShapeError(op, {}, {});
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  require_defined(op, a);
  require_defined(op, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(op, a.shape(), b.shape());
  }
}

Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

template <typename F, typename G>
Tensor unary(const char* op, const Tensor& a, F forward, G derivative) {
  require_defined(op, a);
  const auto& in = a.node()->value;
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  return record(op, a.shape(), std::move(out), {&a},
                [derivative](Node& self) {
                  const auto& x = pvalue(self, 0);
                  auto& gx = pgrad(self, 0);
                  for (std::size_t i = 0; i < x.size(); ++i) {
                    gx[i] += self.grad[i] * derivative(x[i], self.value[i]);
                  }
                });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  std::vector<double> out(a.size());
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return record("add", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants(self, k)) continue;
      auto& g = pgrad(self, k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  std::vector<double> out(a.size());
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return record("sub", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    if (wants(self, 0)) {
      auto& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      auto& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  std::vector<double> out(a.size());
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return record("mul", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& x = pvalue(self, 0);
    const auto& y = pvalue(self, 1);
    if (wants(self, 0)) {
      auto& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y[i];
    }
    if (wants(self, 1)) {
      auto& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same("div", a, b);
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (y[i] == 0.0) throw DomainError("div", "division by zero");
    out[i] = x[i] / y[i];
  }
  return record("div", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& y = pvalue(self, 1);
    if (wants(self, 0)) {
      auto& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / y[i];
    }
    if (wants(self, 1)) {
      auto& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] -= self.grad[i] * self.value[i] / y[i];
      }
    }
  });
}

Tensor add_row(const Tensor& a, const Tensor& b) {
  require_defined("add_row", a);
  require_defined("add_row", b);
  if (b.rows() != 1 || b.cols() != a.cols()) {
    throw ShapeError("add_row", a.shape(), b.shape());
  }
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.node()->value);
  const auto& bias = b.node()->value;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bias[j];
  }
  return record("add_row", a.shape(), std::move(out), {&a, &b},
                [r, c](Node& self) {
                  if (wants(self, 0)) {
                    auto& g = pgrad(self, 0);
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                  }
                  if (wants(self, 1)) {
                    auto& g = pgrad(self, 1);
                    for (std::size_t i = 0; i < r; ++i) {
                      for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
                    }
                  }
                });
}

Tensor scale(const Tensor& a, double s) {
  return unary(
      "scale", a, [s](double x) { return x * s; },
      [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      "add_scalar", a, [s](double x) { return x + s; },
      [](double, double) { return 1.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined("matmul", a);
  require_defined("matmul", b);
  if (a.cols() != b.rows()) throw ShapeError("matmul", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  as_matrix(out, m, n).noalias() =
      as_matrix(a.node()->value, m, k) * as_matrix(b.node()->value, k, n);
  return record("matmul", matrix_shape(m, n), std::move(out), {&a, &b},
                [m, k, n](Node& self) {
                  auto dc = as_matrix(std::as_const(self.grad), m, n);
                  if (wants(self, 0)) {
                    as_matrix(pgrad(self, 0), m, k).noalias() +=
                        dc * as_matrix(pvalue(self, 1), k, n).transpose();
                  }
                  if (wants(self, 1)) {
                    as_matrix(pgrad(self, 1), k, n).noalias() +=
                        as_matrix(pvalue(self, 0), m, k).transpose() * dc;
                  }
                });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_defined("matmul_nt", a);
  require_defined("matmul_nt", b);
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(m * n);
  as_matrix(out, m, n).noalias() =
      as_matrix(a.node()->value, m, k) *
      as_matrix(b.node()->value, n, k).transpose();
  return record("matmul_nt", matrix_shape(m, n), std::move(out), {&a, &b},
                [m, k, n](Node& self) {
                  auto dc = as_matrix(std::as_const(self.grad), m, n);
                  if (wants(self, 0)) {
                    as_matrix(pgrad(self, 0), m, k).noalias() +=
                        dc * as_matrix(pvalue(self, 1), n, k);
                  }
                  if (wants(self, 1)) {
                    as_matrix(pgrad(self, 1), n, k).noalias() +=
                        dc.transpose() * as_matrix(pvalue(self, 0), m, k);
                  }
                });
}

Tensor transpose(const Tensor& a) {
  require_defined("transpose", a);
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  as_matrix(out, c, r) = as_matrix(a.node()->value, r, c).transpose();
  return record("transpose", matrix_shape(c, r), std::move(out), {&a},
                [r, c](Node& self) {
                  as_matrix(pgrad(self, 0), r, c) +=
                      as_matrix(std::as_const(self.grad), c, r).transpose();
                });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols", {}, {});
  const std::size_t r = parts[0].rows();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_defined("concat_cols", p);
    if (p.rows() != r) throw ShapeError("concat_cols", parts[0].shape(), p.shape());
    offsets.push_back(total);
    total += p.cols();
  }
  std::vector<double> out(r * total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].node()->value;
    const std::size_t c = parts[k].cols();
    for (std::size_t i = 0; i < r; ++i) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(i * c), c,
                  out.begin() + static_cast<std::ptrdiff_t>(i * total + offsets[k]));
    }
  }
  return record_many("concat_cols", matrix_shape(r, total), std::move(out), parts,
                     [r, total, offsets](Node& self) {
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         if (!wants(self, k)) continue;
                         auto& g = pgrad(self, k);
                         const std::size_t c = g.size() / r;
                         for (std::size_t i = 0; i < r; ++i) {
                           for (std::size_t j = 0; j < c; ++j) {
                             g[i * c + j] += self.grad[i * total + offsets[k] + j];
                           }
                         }
                       }
                     });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows", {}, {});
  const std::size_t c = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_defined("concat_rows", p);
    if (p.cols() != c) throw ShapeError("concat_rows", parts[0].shape(), p.shape());
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * c);
  for (const auto& p : parts) {
    const auto& v = p.node()->value;
    out.insert(out.end(), v.begin(), v.end());
  }
  return record_many("concat_rows", matrix_shape(total, c), std::move(out), parts,
                     [](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         auto& g = pgrad(self, k);
                         if (wants(self, k)) {
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             g[i] += self.grad[offset + i];
                           }
                         }
                         offset += g.size();
                       }
                     });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_defined("slice_cols", a);
  if (begin >= end || end > a.cols()) {
    throw ShapeError("slice_cols", a.shape(), {begin, end});
  }
  const std::size_t r = a.rows(), c = a.cols(), w = end - begin;
  std::vector<double> out(r * w);
  const auto& v = a.node()->value;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = v[i * c + begin + j];
  }
  return record("slice_cols", matrix_shape(r, w), std::move(out), {&a},
                [r, c, w, begin](Node& self) {
                  auto& g = pgrad(self, 0);
                  for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < w; ++j) {
                      g[i * c + begin + j] += self.grad[i * w + j];
                    }
                  }
                });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_defined("slice_rows", a);
  if (begin >= end || end > a.rows()) {
    throw ShapeError("slice_rows", a.shape(), {begin, end});
  }
  const std::size_t c = a.cols();
  const auto& v = a.node()->value;
  std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(begin * c),
                          v.begin() + static_cast<std::ptrdiff_t>(end * c));
  return record("slice_rows", matrix_shape(end - begin, c), std::move(out), {&a},
                [begin, c](Node& self) {
                  auto& g = pgrad(self, 0);
                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    g[begin * c + i] += self.grad[i];
                  }
                });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  require_defined("log", a);
  for (double x : a.values()) {
    if (!(x > 0.0)) throw DomainError("log", "non-positive operand");
  }
  return unary(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      "gelu", a,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [inv_sqrt_2pi](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        return cdf + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
      });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary(
      "clamp_min", a, [lo](double x) { return x < lo ? lo : x; },
      [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

Tensor softmax_rows(const Tensor& a) {
  require_defined("softmax_rows", a);
  const std::size_t r = a.rows(), c = a.cols();
  const auto& x = a.node()->value;
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = x.data() + i * c;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) m = std::max(m, row[j]);
    if (!std::isfinite(m)) throw DomainError("softmax_rows", "row has no finite entry");
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(row[j] - m);
      z += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  return record("softmax_rows", a.shape(), std::move(out), {&a},
                [r, c](Node& self) {
                  auto& g = pgrad(self, 0);
                  for (std::size_t i = 0; i < r; ++i) {
                    const double* p = self.value.data() + i * c;
                    const double* dy = self.grad.data() + i * c;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < c; ++j) dot += dy[j] * p[j];
                    for (std::size_t j = 0; j < c; ++j) g[i * c + j] += p[j] * (dy[j] - dot);
                  }
                });
}

Tensor log_softmax_rows(const Tensor& a) {
  require_defined("log_softmax_rows", a);
  const std::size_t r = a.rows(), c = a.cols();
  const auto& x = a.node()->value;
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = x.data() + i * c;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) m = std::max(m, row[j]);
    if (!std::isfinite(m)) {
      throw DomainError("log_softmax_rows", "row has no finite entry");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - m);
    const double lse = m + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lse;
  }
  return record("log_softmax_rows", a.shape(), std::move(out), {&a},
                [r, c](Node& self) {
                  auto& g = pgrad(self, 0);
                  for (std::size_t i = 0; i < r; ++i) {
                    const double* ly = self.value.data() + i * c;
                    const double* dy = self.grad.data() + i * c;
                    double total = 0.0;
                    for (std::size_t j = 0; j < c; ++j) total += dy[j];
                    for (std::size_t j = 0; j < c; ++j) {
                      g[i * c + j] += dy[j] - std::exp(ly[j]) * total;
                    }
                  }
                });
}

Tensor normalize_rows(const Tensor& a) {
  require_defined("normalize_rows", a);
  const std::size_t r = a.rows(), c = a.cols();
  const auto& x = a.node()->value;
  std::vector<double> sums(r, 0.0);
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) sums[i] += x[i * c + j];
    if (sums[i] == 0.0) throw DomainError("normalize_rows", "row sums to zero");
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] / sums[i];
  }
  return record("normalize_rows", a.shape(), std::move(out), {&a},
                [r, c, sums](Node& self) {
                  auto& g = pgrad(self, 0);
                  for (std::size_t i = 0; i < r; ++i) {
                    const double* y = self.value.data() + i * c;
                    const double* dy = self.grad.data() + i * c;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < c; ++j) dot += dy[j] * y[j];
                    for (std::size_t j = 0; j < c; ++j) {
                      g[i * c + j] += (dy[j] - dot) / sums[i];
                    }
                  }
                });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps) {
  require_defined("layer_norm_rows", x);
  const std::size_t r = x.rows(), c = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != c) {
    throw ShapeError("layer_norm_rows", x.shape(), gamma.shape());
  }
  if (beta.rows() != 1 || beta.cols() != c) {
    throw ShapeError("layer_norm_rows", x.shape(), beta.shape());
  }
  const auto& in = x.node()->value;
  const auto& gv = gamma.node()->value;
  const auto& bv = beta.node()->value;
  std::vector<double> xhat(r * c), inv_std(r), out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = in.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (row[j] - mu) * inv_std[i];
      out[i * c + j] = xhat[i * c + j] * gv[j] + bv[j];
    }
  }
  return record(
      "layer_norm_rows", x.shape(), std::move(out), {&x, &gamma, &beta},
      [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const auto& gv = pvalue(self, 1);
        if (wants(self, 0)) {
          auto& gx = pgrad(self, 0);
          const double n = static_cast<double>(c);
          for (std::size_t i = 0; i < r; ++i) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double d = self.grad[i * c + j] * gv[j];
              mean_d += d;
              mean_dx += d * xhat[i * c + j];
            }
            mean_d /= n;
            mean_dx /= n;
            for (std::size_t j = 0; j < c; ++j) {
              const double d = self.grad[i * c + j] * gv[j];
              gx[i * c + j] += inv_std[i] * (d - mean_d - xhat[i * c + j] * mean_dx);
            }
          }
        }
        if (wants(self, 1)) {
          auto& gg = pgrad(self, 1);
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
              gg[j] += self.grad[i * c + j] * xhat[i * c + j];
            }
          }
        }
        if (wants(self, 2)) {
          auto& gb = pgrad(self, 2);
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) gb[j] += self.grad[i * c + j];
          }
        }
      });
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids) {
  require_defined("embedding", table);
  const std::size_t v = table.rows(), d = table.cols();
  if (ids.empty()) throw ShapeError("embedding", table.shape(), {0});
  std::vector<std::size_t> rows(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw DomainError("embedding", "id " + std::to_string(ids[i]) +
                                         " outside table of " + std::to_string(v) +
                                         " rows");
    }
    rows[i] = static_cast<std::size_t>(ids[i]);
  }
  const auto& tv = table.node()->value;
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return record("embedding", matrix_shape(ids.size(), d), std::move(out), {&table},
                [rows = std::move(rows), d](Node& self) {
                  auto& g = pgrad(self, 0);
                  for (std::size_t i = 0; i < rows.size(); ++i) {
                    for (std::size_t j = 0; j < d; ++j) {
                      g[rows[i] * d + j] += self.grad[i * d + j];
                    }
                  }
                });
}

Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask,
                   double value) {
  require_defined("masked_fill", a);
  if (mask.size() != a.size()) {
    throw ShapeError("masked_fill", a.shape(), {mask.size()});
  }
  std::vector<double> out(a.node()->value);
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (m[i]) out[i] = value;
  }
  return record("masked_fill", a.shape(), std::move(out), {&a},
                [m = std::move(m)](Node& self) {
                  auto& g = pgrad(self, 0);
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    if (!m[i]) g[i] += self.grad[i];
                  }
                });
}

Tensor sum(const Tensor& a) {
  require_defined("sum", a);
  double s = 0.0;
  for (double x : a.values()) s += x;
  return record("sum", matrix_shape(1, 1), {s}, {&a}, [](Node& self) {
    auto& g = pgrad(self, 0);
    for (auto& gi : g) gi += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  require_defined("mean", a);
  const double n = static_cast<double>(a.size());
  double s = 0.0;
  for (double x : a.values()) s += x;
  return record("mean", matrix_shape(1, 1), {s / n}, {&a}, [n](Node& self) {
    auto& g = pgrad(self, 0);
    for (auto& gi : g) gi += self.grad[0] / n;
  });
}

Tensor gather(const Tensor& a,
              std::span<const std::pair<std::size_t, std::size_t>> index) {
  require_defined("gather", a);
  if (index.empty()) throw ShapeError("gather", a.shape(), {0});
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<std::size_t> flat(index.size());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k].first >= r || index[k].second >= c) {
      throw ShapeError("gather", a.shape(), {index[k].first, index[k].second});
    }
    flat[k] = index[k].first * c + index[k].second;
  }
  std::vector<double> out(flat.size());
  for (std::size_t k = 0; k < flat.size(); ++k) out[k] = a.node()->value[flat[k]];
  const Shape shape = matrix_shape(1, flat.size());  // before flat is moved into the closure
  return record("gather", shape, std::move(out), {&a},
                [flat = std::move(flat)](Node& self) {
                  auto& g = pgrad(self, 0);
                  for (std::size_t k = 0; k < flat.size(); ++k) g[flat[k]] += self.grad[k];
                });
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine", {a.size()}, {b.size()});
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

Tensor cosine(const Tensor& a, const Tensor& b) {
  require_defined("cosine", a);
  require_defined("cosine", b);
  if (a.size() != b.size()) throw ShapeError("cosine", a.shape(), b.shape());
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  double dot = 0.0, nx2 = 0.0, ny2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx2 += x[i] * x[i];
    ny2 += y[i] * y[i];
  }
  const bool degenerate = nx2 == 0.0 || ny2 == 0.0;
  const double nx = std::sqrt(nx2), ny = std::sqrt(ny2);
  const double cos = degenerate ? 0.0 : dot / (nx * ny);
  return record("cosine", matrix_shape(1, 1), {cos}, {&a, &b},
                [degenerate, nx, ny, nx2, ny2, cos](Node& self) {
                  if (degenerate) return;
                  const auto& x = pvalue(self, 0);
                  const auto& y = pvalue(self, 1);
                  const double g = self.grad[0];
                  if (wants(self, 0)) {
                    auto& gx = pgrad(self, 0);
                    for (std::size_t i = 0; i < x.size(); ++i) {
                      gx[i] += g * (y[i] / (nx * ny) - cos * x[i] / nx2);
                    }
                  }
                  if (wants(self, 1)) {
                    auto& gy = pgrad(self, 1);
                    for (std::size_t i = 0; i < y.size(); ++i) {
                      gy[i] += g * (x[i] / (nx * ny) - cos * y[i] / ny2);
                    }
                  }
                });
}

}  // namespace repsup::ad
