// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensors with a dynamically recorded reverse-mode tape.
//
// Every op that has at least one input with requires_grad() set records its
// parents and a backward closure on the result. The tape is simply the graph
// reachable from the root, so it is rebuilt on every forward pass and freed
// once the last handle to the root goes away. Leaves created by the user
// accumulate gradients across backward() calls until zero_grad().
//
// Tensors are rank 1 or rank 2. Matrix ops treat a rank-1 tensor of length n
// as a 1 x n row vector.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace repsup::ad {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

/// Raised when operand shapes are incompatible. Carries the op name and both
/// shapes so that the message is self-explanatory.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string op, Shape lhs, Shape rhs);

  const std::string& op() const noexcept { return op_; }
  const Shape& lhs() const noexcept { return lhs_; }
  const Shape& rhs() const noexcept { return rhs_; }

 private:
  std::string op_;
  Shape lhs_;
  Shape rhs_;
};

/// Raised when an op receives an operand outside its mathematical domain
/// (log of a non-positive value, division by zero, ...).
class DomainError : public std::domain_error {
 public:
  DomainError(std::string op, const std::string& what);
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

/// Raised for misuse of the tape: non-scalar roots, unrecorded roots,
/// non-deterministic functions handed to grad_check.
class GradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }

  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const { return shape().size(); }
  // Matrix view: a rank-1 tensor of length n is 1 x n.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  std::span<const double> grad() const;
  std::span<double> mutable_grad();

  double item() const;
  double at(std::size_t r, std::size_t c) const;
  std::vector<double> row_values(std::size_t r) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;
  const char* op_name() const;

  void zero_grad();

  /// Same values, no history; the copy shares nothing with the original.
  Tensor detach() const;

  /// Reverse-mode sweep from this scalar. Leaves accumulate; interior grads
  /// are reset first so repeated calls add exactly one gradient per call.
  void backward() const;

  /// True when both handles refer to the same storage.
  bool same_storage(const Tensor& other) const noexcept {
    return node_ == other.node_;
  }

  // Used by op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables recording on the current thread for the lifetime of the guard.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool active() noexcept;

 private:
  bool previous_;
};

// ---------------------------------------------------------------------------
// Primitive ops. All of them validate shapes and throw ShapeError/DomainError.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
/// a (r x c) + b (1 x c) broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor matmul(const Tensor& a, const Tensor& b);
/// a (m x k) times b^T where b is (n x k).
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);

/// Row-wise softmax with max subtraction. -inf entries map to exactly 0.
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
/// Divides every row by its sum. Rows must have a non-zero sum.
Tensor normalize_rows(const Tensor& a);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5);

/// Row gather: result row i is table row ids[i].
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids);
/// Entries with mask[i] != 0 are replaced by value (no gradient flows there).
Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask,
                   double value);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// 1 x k tensor of a(r_i, c_i).
Tensor gather(const Tensor& a,
              std::span<const std::pair<std::size_t, std::size_t>> index);
/// Cosine similarity of two equally sized tensors viewed as flat vectors.
/// Zero vectors give 0 with zero gradient.
Tensor cosine(const Tensor& a, const Tensor& b);

/// Plain-value cosine with the same zero-vector convention.
double cosine(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------

/// Max over all leaf elements of
/// |analytic - central| / max(|analytic|, |central|, 1e-12).
/// f must rebuild its graph from `leaves` on every call.
double grad_check(const std::function<Tensor()>& f, std::span<Tensor> leaves,
                  double epsilon);

}  // namespace repsup::ad
