// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "graphormer/errors.hpp"
#include "graphormer/graph/template_mesh.hpp"
#include "graphormer/numerics/ops.hpp"

namespace graphormer {

/// D^-1/2 (A + I) D^-1/2 over an undirected 0/1 edge list.
inline std::shared_ptr<const SparseMatrix> normalized_adjacency(std::size_t n, const std::vector<Edge>& edges) {
  std::vector<std::vector<std::size_t>> nbr(n);
  for (std::size_t i = 0; i < n; ++i) nbr[i].push_back(i);
  for (const auto& [a, b] : edges) {
    if (a >= n || b >= n)
      throw InputError("edge (" + std::to_string(a) + ", " + std::to_string(b) + ") out of range for " +
                       std::to_string(n) + " nodes");
    if (a == b) continue;  // the identity already supplies the self-loop
    nbr[a].push_back(b);
    nbr[b].push_back(a);
  }
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(nbr[i].begin(), nbr[i].end());
    nbr[i].erase(std::unique(nbr[i].begin(), nbr[i].end()), nbr[i].end());
    inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(nbr[i].size()));
  }
  SparseMatrix s;
  s.rows = s.cols = n;
  s.row_begin.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto j : nbr[i]) {
      s.col_index.push_back(j);
      s.value.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    }
    s.row_begin.push_back(s.col_index.size());
  }
  return std::make_shared<SparseMatrix>(std::move(s));
}

/// Undirected edges between coarse groups induced by fine edges.
inline std::vector<Edge> coarse_edges(const TemplateMesh& mesh) {
  std::vector<Edge> out;
  for (const auto& [a, b] : mesh.edges) {
    const std::size_t ga = mesh.coarse_map[a], gb = mesh.coarse_map[b];
    if (ga != gb) out.emplace_back(std::min(ga, gb), std::max(ga, gb));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Rest-pose coarse vertex nearest to each joint.
inline std::vector<std::size_t> nearest_coarse_vertex(const TemplateMesh& mesh) {
  const auto coarse = coarse_rest_positions(mesh);
  std::vector<std::size_t> out(mesh.num_joints());
  for (std::size_t j = 0; j < mesh.num_joints(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < mesh.coarse_count; ++g) {
      const Vec3 c(coarse[g * 3], coarse[g * 3 + 1], coarse[g * 3 + 2]);
      const double d = (c - mesh.rest_joints[j]).squaredNorm();
      if (d < best) {
        best = d;
        out[j] = g;
      }
    }
  }
  return out;
}

/// Adjacency over the token sequence [grid | joints | coarse vertices].
/// Vertex-vertex follows the coarse mesh, joint-joint the kinematic tree,
/// each joint links to its nearest rest-pose coarse vertex, grid tokens
/// carry only their self-loop.
inline std::shared_ptr<const SparseMatrix> token_adjacency(const TemplateMesh& mesh, std::size_t grid_tokens) {
  const std::size_t nj = mesh.num_joints(), nc = mesh.coarse_count;
  const std::size_t j0 = grid_tokens, v0 = grid_tokens + nj;
  std::vector<Edge> edges;
  for (std::size_t j = 0; j < nj; ++j)
    if (mesh.parents[j] >= 0) edges.emplace_back(j0 + static_cast<std::size_t>(mesh.parents[j]), j0 + j);
  const auto nearest = nearest_coarse_vertex(mesh);
  for (std::size_t j = 0; j < nj; ++j) edges.emplace_back(j0 + j, v0 + nearest[j]);
  for (const auto& [a, b] : coarse_edges(mesh)) edges.emplace_back(v0 + a, v0 + b);
  return normalized_adjacency(grid_tokens + nj + nc, edges);
}

/// Largest |eigenvalue| of a symmetric sparse matrix by power iteration.
inline double spectral_radius(const SparseMatrix& a, std::size_t iterations = 500) {
  std::vector<double> x(a.rows), y(a.rows);
  for (std::size_t i = 0; i < a.rows; ++i) x[i] = 1.0 + 0.01 * static_cast<double>(i % 7);
  double lambda = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < a.rows; ++i) {
      double s = 0.0;
      for (std::size_t k = a.row_begin[i]; k < a.row_begin[i + 1]; ++k) s += a.value[k] * x[a.col_index[k]];
      y[i] = s;
    }
    double norm = 0.0;
    for (double v : y) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    lambda = norm;
    for (std::size_t i = 0; i < a.rows; ++i) x[i] = y[i] / norm;
  }
  return lambda;
}

}  // namespace graphormer
