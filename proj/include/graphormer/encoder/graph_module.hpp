// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <string>

#include "graphormer/config.hpp"
#include "graphormer/encoder/params.hpp"

namespace graphormer {

using AdjacencyPtr = std::shared_ptr<const SparseMatrix>;

/// GELU(A Y W).
template <typename T>
Tensor<T> graph_conv(const AdjacencyPtr& adj, const Tensor<T>& y, const Tensor<T>& w) {
  if (!adj) throw ContractError("graph_conv: null adjacency");
  if (adj->rows != y.rows() || adj->cols != y.rows())
    throw DimensionError("graph_conv: adjacency " + std::to_string(adj->rows) + "x" + std::to_string(adj->cols) +
                         " does not match " + std::to_string(y.rows()) + " tokens");
  return gelu(sparse_matmul(adj, matmul(y, w)));
}

/// Bottleneck d -> d/2 -> d around a graph convolution, three layer norms.
template <typename T>
struct GrbParams {
  LayerNormParams<T> ln_a;
  Linear<T> down;
  LayerNormParams<T> ln_b;
  Tensor<T> wg;
  LayerNormParams<T> ln_c;
  Linear<T> up;

  static GrbParams make(std::size_t d, Rng& rng) {
    if (d % 2 != 0) throw ConfigError("graph residual block needs an even width, got " + std::to_string(d));
    const std::size_t h = d / 2;
    GrbParams p{LayerNormParams<T>::make(d), Linear<T>::make(d, h, true, rng), LayerNormParams<T>::make(h),
                init_normal<T>({h, h}, 1.0 / std::sqrt(static_cast<double>(h)), rng), LayerNormParams<T>::make(h),
                Linear<T>::make(h, d, true, rng)};
    return p;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    ln_a.visit(join_name(prefix, "ln_a"), f);
    down.visit(join_name(prefix, "down"), f);
    ln_b.visit(join_name(prefix, "ln_b"), f);
    f(join_name(prefix, "wg"), wg);
    ln_c.visit(join_name(prefix, "ln_c"), f);
    up.visit(join_name(prefix, "up"), f);
  }
};

/// d(d/2) + d/2 + (d/2)^2 + (d/2)d + d + 2d + 2(d/2) + 2(d/2).
constexpr std::size_t grb_parameter_count(std::size_t d) {
  const std::size_t h = d / 2;
  return d * h + h + h * h + h * d + d + 2 * d + 2 * h + 2 * h;
}

template <typename T>
Tensor<T> graph_residual_block(const AdjacencyPtr& adj, const Tensor<T>& y, const GrbParams<T>& p, double eps = 1e-5) {
  if (y.cols() % 2 != 0) throw ConfigError("graph residual block needs an even width, got " + std::to_string(y.cols()));
  auto z = p.down(gelu(p.ln_a(y, eps)));
  z = graph_conv(adj, gelu(p.ln_b(z, eps)), p.wg);
  z = p.up(gelu(p.ln_c(z, eps)));
  return add(y, z);
}

/// The graph stage inserted into an encoder block's attention branch.
template <typename T>
struct GraphModule {
  GrbKind kind = GrbKind::residual_block;
  std::optional<GrbParams<T>> grb;
  std::optional<Tensor<T>> wg;  // basic_conv: d x d

  static GraphModule make(GrbKind kind, std::size_t d, Rng& rng) {
    GraphModule m;
    m.kind = kind;
    if (kind == GrbKind::residual_block) m.grb = GrbParams<T>::make(d, rng);
    else if (kind == GrbKind::basic_conv) m.wg = init_normal<T>({d, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    else throw ContractError("mlp_equivalent has no graph stage");
    return m;
  }

  Tensor<T> operator()(const AdjacencyPtr& adj, const Tensor<T>& y, double eps) const {
    return grb ? graph_residual_block(adj, y, *grb, eps) : graph_conv(adj, y, *wg);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    if (grb) grb->visit(join_name(prefix, "grb"), f);
    if (wg) f(join_name(prefix, "conv.wg"), *wg);
  }
};

}  // namespace graphormer
