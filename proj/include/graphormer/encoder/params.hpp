// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "graphormer/numerics/ops.hpp"
#include "graphormer/rng.hpp"

namespace graphormer {

inline std::string join_name(const std::string& prefix, const std::string& part) {
  return prefix.empty() ? part : prefix + "." + part;
}

template <typename T>
Tensor<T> init_normal(Shape shape, double stddev, Rng& rng) {
  std::vector<T> v(shape_size(shape));
  for (auto& x : v) x = static_cast<T>(stddev * rng.normal());
  return Tensor<T>::parameter(std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> init_constant(Shape shape, T value) {
  return Tensor<T>::parameter(shape, std::vector<T>(shape_size(shape), value));
}

/// y = x W (+ b), W: in x out.
template <typename T>
struct Linear {
  Tensor<T> w;
  std::optional<Tensor<T>> b;

  /// W ~ N(0, 1/in), zero bias.
  static Linear make(std::size_t in, std::size_t out, bool bias, Rng& rng) {
    Linear l{init_normal<T>({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng), std::nullopt};
    if (bias) l.b = init_constant<T>({out}, T(0));
    return l;
  }

  std::size_t in() const { return w.rows(); }
  std::size_t out() const { return w.cols(); }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto y = matmul(x, w);
    return b ? add_bias(y, *b) : y;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(join_name(prefix, "w"), w);
    if (b) f(join_name(prefix, "b"), *b);
  }
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gamma, beta;

  static LayerNormParams make(std::size_t d) { return {init_constant<T>({d}, T(1)), init_constant<T>({d}, T(0))}; }

  Tensor<T> operator()(const Tensor<T>& x, double eps) const { return layer_norm(x, gamma, beta, eps); }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(join_name(prefix, "gamma"), gamma);
    f(join_name(prefix, "beta"), beta);
  }
};

/// Per-call forward settings. Dropout draws from `rng` only when training.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  double ln_eps = 1e-5;
  Rng* rng = nullptr;
  bool capture_attention = false;
};

template <typename T>
Tensor<T> maybe_dropout(const Tensor<T>& x, const ForwardContext& ctx) {
  if (!ctx.training || ctx.dropout <= 0.0) return x;
  if (!ctx.rng) throw ContractError("training-mode dropout needs an rng");
  return dropout(x, ctx.dropout, *ctx.rng);
}

/// Total scalar count over a visitable parameter set.
template <typename P>
std::size_t count_parameters(P& params) {
  std::size_t n = 0;
  params.visit(std::string{}, [&](const std::string&, auto& t) { n += t.size(); });
  return n;
}

/// Deep copy: every parameter becomes a fresh leaf with the same values.
template <typename P>
P clone_parameters(const P& params) {
  P copy = params;
  copy.visit(std::string{}, [](const std::string&, auto& t) {
    auto fresh = t.detach();
    fresh.set_requires_grad(true);
    t = fresh;
  });
  return copy;
}

template <typename T, typename P>
std::vector<std::pair<std::string, Tensor<T>>> named_parameters(P& params, const std::string& prefix = {}) {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  params.visit(prefix, [&](const std::string& name, Tensor<T>& t) { out.emplace_back(name, t); });
  return out;
}

}  // namespace graphormer
