// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "graphormer/encoder/attention.hpp"
#include "graphormer/encoder/graph_module.hpp"

namespace graphormer {

/// Graph-stage choice for one encoder; `enabled` false gives a plain
/// transformer block.
struct GraphSpec {
  bool enabled = false;
  GrbKind kind = GrbKind::residual_block;
  GrbDesign design = GrbDesign::after;
};

/// Extra MLP hidden units whose parameters (2d + 1 each) best match one GRB.
constexpr std::size_t mlp_equivalent_units(std::size_t d) {
  const std::size_t per_unit = 2 * d + 1;
  return (grb_parameter_count(d) + per_unit / 2) / per_unit;
}

template <typename T>
struct BlockParams {
  std::size_t heads = 1;
  GrbDesign design = GrbDesign::after;
  LayerNormParams<T> ln1;
  MhsaParams<T> attn;
  std::optional<GraphModule<T>> graph;
  LayerNormParams<T> ln2;
  Linear<T> mlp1, mlp2;

  static BlockParams make(std::size_t d, std::size_t heads, std::size_t mlp_ratio, const GraphSpec& g, Rng& rng) {
    if (heads == 0 || d % heads != 0)
      throw ConfigError(std::to_string(heads) + " heads do not divide width " + std::to_string(d));
    BlockParams p;
    p.heads = heads;
    p.design = g.design;
    p.ln1 = LayerNormParams<T>::make(d);
    p.attn = MhsaParams<T>::make(d, rng);
    std::size_t hidden = mlp_ratio * d;
    if (g.enabled && g.kind == GrbKind::mlp_equivalent) hidden += mlp_equivalent_units(d);
    else if (g.enabled) p.graph = GraphModule<T>::make(g.kind, d, rng);
    p.ln2 = LayerNormParams<T>::make(d);
    p.mlp1 = Linear<T>::make(d, hidden, true, rng);
    p.mlp2 = Linear<T>::make(hidden, d, true, rng);
    return p;
  }

  std::size_t width() const { return ln1.gamma.size(); }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    ln1.visit(join_name(prefix, "ln1"), f);
    attn.visit(join_name(prefix, "attn"), f);
    if (graph) graph->visit(join_name(prefix, "graph"), f);
    ln2.visit(join_name(prefix, "ln2"), f);
    mlp1.visit(join_name(prefix, "mlp1"), f);
    mlp2.visit(join_name(prefix, "mlp2"), f);
  }
};

template <typename T>
struct BlockOutput {
  Tensor<T> out;
  std::vector<Tensor<T>> attention;
};

/// Pre-norm block: H = X + branch(LN1 X), out = H + MLP(LN2 H). The branch is
/// MHSA with the graph stage after it, before it, or beside it.
template <typename T>
BlockOutput<T> encoder_block_forward(const AdjacencyPtr& adj, const Tensor<T>& x, const BlockParams<T>& p,
                                     const ForwardContext& ctx) {
  const auto x1 = p.ln1(x, ctx.ln_eps);
  BlockOutput<T> r;
  Tensor<T> branch;
  if (!p.graph) {
    auto a = mhsa_forward(x1, p.attn, p.heads);
    branch = a.out;
    r.attention = std::move(a.attention);
  } else if (p.design == GrbDesign::after) {
    auto a = mhsa_forward(x1, p.attn, p.heads);
    branch = (*p.graph)(adj, a.out, ctx.ln_eps);
    r.attention = std::move(a.attention);
  } else if (p.design == GrbDesign::before) {
    auto a = mhsa_forward((*p.graph)(adj, x1, ctx.ln_eps), p.attn, p.heads);
    branch = a.out;
    r.attention = std::move(a.attention);
  } else {
    auto a = mhsa_forward(x1, p.attn, p.heads);
    branch = add(a.out, (*p.graph)(adj, x1, ctx.ln_eps));
    r.attention = std::move(a.attention);
  }
  const auto h = add(x, maybe_dropout(branch, ctx));
  const auto m = p.mlp2(gelu(p.mlp1(p.ln2(h, ctx.ln_eps))));
  r.out = add(h, maybe_dropout(m, ctx));
  return r;
}

template <typename T>
struct EncoderParams {
  Linear<T> proj;
  std::vector<BlockParams<T>> blocks;

  static EncoderParams make(std::size_t d_in, std::size_t d, std::size_t blocks, std::size_t heads,
                            std::size_t mlp_ratio, const GraphSpec& g, Rng& rng) {
    EncoderParams e{Linear<T>::make(d_in, d, true, rng), {}};
    for (std::size_t b = 0; b < blocks; ++b) e.blocks.push_back(BlockParams<T>::make(d, heads, mlp_ratio, g, rng));
    return e;
  }

  std::size_t width() const { return proj.out(); }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    proj.visit(join_name(prefix, "proj"), f);
    for (std::size_t b = 0; b < blocks.size(); ++b) blocks[b].visit(join_name(prefix, "block" + std::to_string(b)), f);
  }
};

template <typename T>
struct EncoderOutput {
  Tensor<T> out;
  /// Per-block head maps when capture_attention is set, else only the last block's.
  std::vector<std::vector<Tensor<T>>> attention;
};

/// Sequential composition of blocks (no input projection).
template <typename T>
EncoderOutput<T> graphormer_encoder_forward(const AdjacencyPtr& adj, const Tensor<T>& x,
                                            const std::vector<BlockParams<T>>& blocks, const ForwardContext& ctx) {
  if (blocks.empty()) throw ConfigError("encoder needs at least one block");
  EncoderOutput<T> r{x, {}};
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (blocks[b].width() != r.out.cols())
      throw DimensionError("encoder block " + std::to_string(b) + " width " + std::to_string(blocks[b].width()) +
                           " does not match input width " + std::to_string(r.out.cols()));
    auto o = encoder_block_forward(adj, r.out, blocks[b], ctx);
    r.out = o.out;
    if (ctx.capture_attention || b + 1 == blocks.size()) r.attention.push_back(std::move(o.attention));
  }
  return r;
}

}  // namespace graphormer
