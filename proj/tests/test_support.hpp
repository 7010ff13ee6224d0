// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "graphormer/numerics/tensor.hpp"
#include "graphormer/rng.hpp"

namespace testing_support {

template <typename T>
graphormer::Tensor<T> random_matrix(std::size_t rows, std::size_t cols, graphormer::Rng& rng, double scale = 1.0) {
  std::vector<T> v(rows * cols);
  for (auto& x : v) x = static_cast<T>(scale * rng.uniform(-1.0, 1.0));
  return graphormer::Tensor<T>({rows, cols}, std::move(v));
}

template <typename T>
graphormer::Tensor<T> random_parameter(std::size_t rows, std::size_t cols, graphormer::Rng& rng, double scale = 1.0) {
  auto t = random_matrix<T>(rows, cols, rng, scale);
  t.set_requires_grad(true);
  return t;
}

}  // namespace testing_support
