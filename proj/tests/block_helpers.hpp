// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "graphormer/encoder/block.hpp"
#include "graphormer/graph/adjacency.hpp"
#include "plain_transformer_oracle.hpp"

namespace testing_support {

using namespace graphormer;

inline AdjacencyPtr random_graph(std::size_t n, Rng& rng, double density = 0.3) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < density) edges.emplace_back(i, j);
  return normalized_adjacency(n, edges);
}

inline std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

// Row i of the result is row perm[i] of x.
inline Tensor<double> permute_rows(const Tensor<double>& x, const std::vector<std::size_t>& perm) {
  std::vector<double> v(x.size());
  const std::size_t d = x.cols();
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) v[i * d + j] = x.at(perm[i], j);
  return Tensor<double>({x.rows(), d}, v);
}

inline AdjacencyPtr permute_adjacency(const SparseMatrix& a, const std::vector<std::size_t>& perm) {
  const auto dense = a.to_dense();
  const std::size_t n = a.rows;
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = dense[perm[i] * n + perm[j]];
  return std::make_shared<SparseMatrix>(SparseMatrix::from_dense(n, n, out));
}

// Layer-norm affines start at (1, 0); randomize them so they are exercised.
template <typename P>
void randomize_all(P& params, Rng& rng, double scale = 0.5) {
  params.visit({}, [&](const std::string& name, Tensor<double>& t) {
    auto v = t.mutable_values();
    const bool gamma = name.ends_with("gamma");
    for (auto& x : v) x = (gamma ? 1.0 : 0.0) + scale * rng.uniform(-1.0, 1.0);
  });
}

template <typename P>
void zero_all(P& params) {
  params.visit({}, [](const std::string&, Tensor<double>& t) {
    for (auto& x : t.mutable_values()) x = 0.0;
  });
}

inline oracle::Mat to_mat(const Tensor<double>& t) {
  oracle::Mat m(t.rows(), t.cols());
  m.v.assign(t.values().begin(), t.values().end());
  return m;
}

inline std::vector<double> to_vec(const Tensor<double>& t) { return t.to_vector(); }

inline oracle::BlockWeights to_oracle(const BlockParams<double>& p, double eps) {
  oracle::BlockWeights w;
  w.g1 = to_vec(p.ln1.gamma);
  w.b1n = to_vec(p.ln1.beta);
  w.g2 = to_vec(p.ln2.gamma);
  w.b2n = to_vec(p.ln2.beta);
  w.wq = to_mat(p.attn.wq);
  w.wk = to_mat(p.attn.wk);
  w.wv = to_mat(p.attn.wv);
  w.wo = to_mat(p.attn.wo);
  w.w1 = to_mat(p.mlp1.w);
  w.w2 = to_mat(p.mlp2.w);
  w.b1 = to_vec(*p.mlp1.b);
  w.b2 = to_vec(*p.mlp2.b);
  w.heads = p.heads;
  w.eps = eps;
  return w;
}

inline double max_abs_diff(std::span<const double> a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testing_support
