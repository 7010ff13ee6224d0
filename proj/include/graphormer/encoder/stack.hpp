// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "graphormer/encoder/block.hpp"

namespace graphormer {

/// Token order is [grid | joints | coarse vertices].
struct TokenLayout {
  std::size_t grid = 0;
  std::size_t joints = 0;
  std::size_t vertices = 0;

  std::size_t total() const { return grid + joints + vertices; }
  std::size_t queries() const { return joints + vertices; }
  bool operator==(const TokenLayout&) const = default;
};

/// Three width-reducing encoders; a 3-D regression head after the last, and a
/// tap head on the vertex tokens after each earlier encoder.
template <typename T>
struct StackParams {
  std::array<EncoderParams<T>, 3> encoders;
  std::array<Linear<T>, 2> taps;
  Linear<T> head;

  static StackParams make(std::size_t token_dim, const std::vector<std::size_t>& dims, std::size_t blocks,
                          std::size_t heads, std::size_t mlp_ratio, const std::array<GraphSpec, 3>& graph, Rng& rng) {
    if (dims.size() != 3) throw ConfigError("stack needs three encoder widths");
    StackParams s;
    std::size_t d_in = token_dim;
    for (std::size_t k = 0; k < 3; ++k) {
      s.encoders[k] = EncoderParams<T>::make(d_in, dims[k], blocks, heads, mlp_ratio, graph[k], rng);
      d_in = dims[k];
    }
    for (std::size_t k = 0; k < 2; ++k) s.taps[k] = Linear<T>::make(dims[k], 3, true, rng);
    s.head = Linear<T>::make(dims[2], 3, true, rng);
    return s;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t k = 0; k < 3; ++k) encoders[k].visit(join_name(prefix, "enc" + std::to_string(k + 1)), f);
    for (std::size_t k = 0; k < 2; ++k) taps[k].visit(join_name(prefix, "tap" + std::to_string(k + 1)), f);
    head.visit(join_name(prefix, "head"), f);
  }
};

template <typename T>
struct StackOutput {
  Tensor<T> coarse;    // V_coarse x 3
  Tensor<T> joints3d;  // J x 3
  /// Coarse predictions after encoders 1, 2 and 3 (the last equals `coarse`).
  std::vector<Tensor<T>> intermediate_coarse;
  Tensor<T> final_tokens;  // n x d_3
  /// attention[k][b][h]: encoder k, block b (all blocks only when captured), head h.
  std::vector<std::vector<std::vector<Tensor<T>>>> attention;
};

template <typename T>
StackOutput<T> stack_forward(const AdjacencyPtr& adj, const Tensor<T>& tokens, const StackParams<T>& s,
                             const TokenLayout& layout, const ForwardContext& ctx) {
  detail::require_matrix(tokens, "stack_forward");
  if (tokens.rows() != layout.total())
    throw ConfigError("stack_forward: " + std::to_string(tokens.rows()) + " tokens but layout expects " +
                      std::to_string(layout.total()));
  if (!adj || adj->rows != layout.total())
    throw ConfigError("stack_forward: adjacency covers " + std::to_string(adj ? adj->rows : 0) + " tokens, expected " +
                      std::to_string(layout.total()));
  if (layout.vertices == 0) throw ConfigError("stack_forward: no vertex tokens");
  StackOutput<T> r;
  Tensor<T> x = tokens;
  for (std::size_t k = 0; k < 3; ++k) {
    auto e = graphormer_encoder_forward(adj, s.encoders[k].proj(x), s.encoders[k].blocks, ctx);
    x = e.out;
    r.attention.push_back(std::move(e.attention));
    if (k < 2) r.intermediate_coarse.push_back(s.taps[k](slice_rows(x, layout.grid + layout.joints, layout.vertices)));
  }
  r.final_tokens = x;
  const auto pred = s.head(slice_rows(x, layout.grid, layout.queries()));
  r.joints3d = slice_rows(pred, 0, layout.joints);
  r.coarse = slice_rows(pred, layout.joints, layout.vertices);
  r.intermediate_coarse.push_back(r.coarse);
  return r;
}

}  // namespace graphormer
