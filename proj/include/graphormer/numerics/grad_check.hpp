// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "graphormer/numerics/tensor.hpp"
#include "graphormer/rng.hpp"

namespace graphormer {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-5;
  /// 0 checks every entry; otherwise a seeded random subset per parameter.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
  /// Lower bound on the relative-error denominator, so entries whose true
  /// gradient is ~0 are judged on absolute error instead.
  double scale_floor = 1e-6;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
  bool passed() const { return max_rel_error() < tolerance; }
  const GradCheckEntry* worst() const {
    const GradCheckEntry* w = nullptr;
    for (const auto& e : entries)
      if (!w || e.max_rel_error > w->max_rel_error) w = &e;
    return w;
  }
};

template <typename T>
using NamedTensor = std::pair<std::string, Tensor<T>>;

/// Compares reverse-mode gradients of a scalar function with central
/// differences (f(p+h) - f(p-h)) / 2h, entry by entry.
template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& f, std::vector<NamedTensor<T>> params,
                           const GradCheckOptions& options = {}) {
  for (auto& [name, p] : params) {
    if (!p.requires_grad()) throw ContractError("grad_check: parameter '" + name + "' does not require grad");
    p.zero_grad();
  }
  const T base = [&] {
    Tensor<T> loss = f();
    if (loss.size() != 1) throw ContractError("grad_check: function must return a scalar");
    backward(loss);
    return loss.item();
  }();
  auto eval = [&] {
    NoGradGuard guard;
    return f().item();
  };
  const T again = eval();
  if (!(again == base))
    throw NumericalError("grad_check: function is not deterministic (" + std::to_string(base) + " then " +
                         std::to_string(again) + ")");

  GradCheckReport report;
  report.tolerance = options.tolerance;
  Rng rng(options.seed);
  const T h = static_cast<T>(options.step);
  for (auto& [name, p] : params) {
    const std::vector<T> analytic = p.grad();
    std::vector<std::size_t> indices(p.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    if (options.max_entries_per_param && indices.size() > options.max_entries_per_param) {
      for (std::size_t i = 0; i < options.max_entries_per_param; ++i)
        std::swap(indices[i], indices[i + rng.below(indices.size() - i)]);
      indices.resize(options.max_entries_per_param);
    }
    GradCheckEntry entry{name, indices.size(), 0.0, 0.0};
    auto values = p.mutable_values();
    for (auto idx : indices) {
      const T original = values[idx];
      values[idx] = original + h;
      const T plus = eval();
      values[idx] = original - h;
      const T minus = eval();
      values[idx] = original;
      const double numeric = (static_cast<double>(plus) - static_cast<double>(minus)) / (2.0 * options.step);
      const double a = static_cast<double>(analytic[idx]);
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), options.scale_floor});
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_rel_error = std::max(entry.max_rel_error, abs_err / denom);
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace graphormer
