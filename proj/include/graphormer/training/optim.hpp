// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "graphormer/numerics/tensor.hpp"

namespace graphormer {

template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m, v;  // one pair per parameter, shaped like it

  bool operator==(const AdamState&) const = default;
};

template <typename T>
AdamState<T> make_adam_state(const std::vector<Tensor<T>>& params) {
  AdamState<T> s;
  for (const auto& p : params) {
    s.m.emplace_back(p.size(), T(0));
    s.v.emplace_back(p.size(), T(0));
  }
  return s;
}

/// Bias-corrected Adam update of every parameter with its gradient.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<std::vector<T>>& grads, AdamState<T>& s, double lr) {
  if (grads.size() != params.size() || s.m.size() != params.size())
    throw ContractError("adam_step: parameter, gradient and state counts differ");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  const T b1 = static_cast<T>(s.beta1), b2 = static_cast<T>(s.beta2);
  const T inv_c1 = static_cast<T>(1.0 / c1), inv_c2 = static_cast<T>(1.0 / c2);
  const T step = static_cast<T>(lr), eps = static_cast<T>(s.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].mutable_values();
    const auto& g = grads[i];
    if (g.size() != values.size()) throw ContractError("adam_step: gradient shape differs from parameter");
    auto& m = s.m[i];
    auto& v = s.v[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      values[j] -= step * (m[j] * inv_c1) / (std::sqrt(v[j] * inv_c2) + eps);
    }
  }
}

/// base_lr before drop_epoch, base_lr / factor from it on (epochs count from 0).
inline double lr_schedule(std::size_t epoch, double base_lr, std::size_t drop_epoch, double factor) {
  return epoch < drop_epoch ? base_lr : base_lr / factor;
}

/// Rescales the gradients so their global L2 norm is at most max_norm;
/// returns the norm before clipping. max_norm 0 disables.
template <typename T>
double clip_gradients(std::vector<std::vector<T>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (T x : g) sq += static_cast<double>(x) * static_cast<double>(x);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T f = static_cast<T>(max_norm / norm);
    for (auto& g : grads)
      for (auto& x : g) x *= f;
  }
  return norm;
}

}  // namespace graphormer
