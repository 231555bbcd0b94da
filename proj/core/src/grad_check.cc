// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "repsup/tensor.h"

namespace repsup::ad {

double grad_check(const std::function<Tensor()>& f, std::span<Tensor> leaves,
                  double epsilon) {
  if (!(epsilon > 0.0)) throw GradError("grad_check: epsilon must be positive");

  const auto evaluate = [&f] {
    NoGradGuard guard;
    return f().item();
  };

  const double first = evaluate();
  const double second = evaluate();
  if (first != second && !(std::isnan(first) && std::isnan(second))) {
    throw GradError("grad_check: function is not deterministic");
  }

  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  f().backward();

  double worst = 0.0;
  for (auto& leaf : leaves) {
    const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
    auto values = leaf.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double plus = evaluate();
      values[i] = saved - epsilon;
      const double minus = evaluate();
      values[i] = saved;

      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double denom =
          std::max({std::abs(analytic[i]), std::abs(numeric), 1e-12});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace repsup::ad
