// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "graphormer/encoder/stack.hpp"
#include "graphormer/pipeline/features.hpp"

namespace graphormer {

/// Grid cells go through a one-hidden-layer MLP c -> token_dim -> token_dim;
/// the optional global MLP maps c_g -> c_g before concatenation.
template <typename T>
struct TokenizerParams {
  Linear<T> grid1, grid2;
  std::optional<Linear<T>> global_mlp;

  static TokenizerParams make(std::size_t channels, std::size_t global_dim, std::size_t token_dim, bool global_mlp,
                              Rng& rng) {
    TokenizerParams p{Linear<T>::make(channels, token_dim, true, rng), Linear<T>::make(token_dim, token_dim, true, rng),
                      std::nullopt};
    if (global_mlp) p.global_mlp = Linear<T>::make(global_dim, global_dim, true, rng);
    return p;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    grid1.visit(join_name(prefix, "grid1"), f);
    grid2.visit(join_name(prefix, "grid2"), f);
    if (global_mlp) global_mlp->visit(join_name(prefix, "global_mlp"), f);
  }
};

/// Tokens in order [grid | joints | vertices]; each query token is the
/// global vector followed by its template rest position. `positions` holds the
/// joint rows then the coarse vertex rows (Q x 3).
template <typename T>
Tensor<T> tokenize(const Features<T>& f, const Tensor<T>& positions, const TokenizerParams<T>& p,
                   const TokenLayout& layout) {
  if (positions.rows() != layout.queries() || positions.cols() != 3)
    throw ConfigError("tokenize: " + shape_string(positions.shape()) + " template positions for " +
                      std::to_string(layout.queries()) + " query tokens");
  const auto global = p.global_mlp ? gelu((*p.global_mlp)(f.global)) : f.global;
  auto queries = concat_cols(std::vector{repeat_rows(global, layout.queries()), positions});
  if (layout.grid == 0) return queries;
  if (f.grid.rows() != layout.grid)
    throw ConfigError("tokenize: " + std::to_string(f.grid.rows()) + " grid cells, layout expects " +
                      std::to_string(layout.grid));
  return concat_rows(std::vector{p.grid2(gelu(p.grid1(f.grid))), queries});
}

}  // namespace graphormer
