// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "graphormer/config.hpp"
#include "graphormer/encoder/params.hpp"

namespace graphormer {

template <typename T>
struct MhsaParams {
  Tensor<T> wq, wk, wv, wo;  // d x d, no biases

  static MhsaParams make(std::size_t d, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    return {init_normal<T>({d, d}, s, rng), init_normal<T>({d, d}, s, rng), init_normal<T>({d, d}, s, rng),
            init_normal<T>({d, d}, s, rng)};
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(join_name(prefix, "wq"), wq);
    f(join_name(prefix, "wk"), wk);
    f(join_name(prefix, "wv"), wv);
    f(join_name(prefix, "wo"), wo);
  }
};

template <typename T>
struct MhsaResult {
  Tensor<T> out;                    // n x d
  std::vector<Tensor<T>> attention;  // one n x n map per head
};

/// Multi-head scaled dot-product self-attention with output projection.
template <typename T>
MhsaResult<T> mhsa_forward(const Tensor<T>& x, const MhsaParams<T>& p, std::size_t heads) {
  detail::require_matrix(x, "mhsa");
  const std::size_t d = x.cols();
  if (heads == 0 || d % heads != 0)
    throw ConfigError("mhsa: " + std::to_string(heads) + " heads do not divide width " + std::to_string(d));
  if (p.wq.rows() != d)
    throw DimensionError("mhsa: input width " + std::to_string(d) + " does not match W_Q " + shape_string(p.wq.shape()));
  const std::size_t dh = d / heads;
  const auto q = matmul(x, p.wq), k = matmul(x, p.wk), v = matmul(x, p.wv);
  const T inv_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  MhsaResult<T> r;
  std::vector<Tensor<T>> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    const auto qh = heads == 1 ? q : slice_cols(q, h * dh, dh);
    const auto kh = heads == 1 ? k : slice_cols(k, h * dh, dh);
    const auto vh = heads == 1 ? v : slice_cols(v, h * dh, dh);
    auto probs = softmax_rows(scale(matmul(qh, transpose(kh)), inv_scale));
    outs.push_back(matmul(probs, vh));
    r.attention.push_back(std::move(probs));
  }
  r.out = matmul(heads == 1 ? outs.front() : concat_cols(outs), p.wo);
  return r;
}

/// Mean over heads of per-head attention maps, n x n row-major.
template <typename T>
std::vector<double> average_heads(const std::vector<Tensor<T>>& maps) {
  if (maps.empty()) throw ContractError("average_heads: no attention maps");
  std::vector<double> avg(maps.front().size(), 0.0);
  for (const auto& m : maps)
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += static_cast<double>(m[i]);
  for (auto& a : avg) a /= static_cast<double>(maps.size());
  return avg;
}

}  // namespace graphormer
