// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "graphormer/graph/dataset.hpp"
#include "graphormer/pipeline/model.hpp"

namespace graphormer {

struct LossWeights {
  double vertex_fine = 1.0;
  double vertex_coarse = 1.0;
  double joint3d = 1.0;
  double joint2d = 1.0;

  static LossWeights from(const TrainConfig& t) {
    return {t.w_vertex_fine, t.w_vertex_coarse, t.w_joint3d, t.w_joint2d};
  }
};

template <typename T>
struct Targets {
  Tensor<T> fine, coarse, joints3d, joints2d;
};

template <typename T>
Tensor<T> as_tensor(const std::vector<double>& v, std::size_t cols) {
  if (cols == 0 || v.size() % cols != 0)
    throw DimensionError("as_tensor: " + std::to_string(v.size()) + " values do not form rows of " +
                         std::to_string(cols));
  return Tensor<T>({v.size() / cols, cols}, std::vector<T>(v.begin(), v.end()));
}

template <typename T>
Targets<T> make_targets(const MeshSample& s) {
  return {as_tensor<T>(s.fine_vertices, 3), as_tensor<T>(s.coarse_vertices, 3), as_tensor<T>(s.joints3d, 3),
          as_tensor<T>(s.joints2d, 2)};
}

template <typename T>
struct LossTerms {
  Tensor<T> total;
  double vertex_fine = 0, vertex_coarse = 0, joint3d = 0, joint2d = 0;
};

/// Weighted sum of mean-absolute errors; the coarse term sums over every
/// intermediate prediction. Zero-weight terms are reported but not added.
template <typename T>
LossTerms<T> compute_losses(const ModelOutput<T>& out, const Targets<T>& gt, const LossWeights& w) {
  LossTerms<T> r;
  std::vector<std::pair<double, Tensor<T>>> parts;
  const auto vf = l1_distance(out.fine_vertices, gt.fine);
  r.vertex_fine = static_cast<double>(vf.item());
  parts.emplace_back(w.vertex_fine, vf);
  if (out.intermediate_coarse.empty()) throw ContractError("compute_losses: no coarse predictions");
  Tensor<T> vc = l1_distance(out.intermediate_coarse[0], gt.coarse);
  for (std::size_t k = 1; k < out.intermediate_coarse.size(); ++k)
    vc = add(vc, l1_distance(out.intermediate_coarse[k], gt.coarse));
  r.vertex_coarse = static_cast<double>(vc.item());
  parts.emplace_back(w.vertex_coarse, vc);
  const auto j3 = l1_distance(out.joints3d, gt.joints3d);
  r.joint3d = static_cast<double>(j3.item());
  parts.emplace_back(w.joint3d, j3);
  const auto j2 = l1_distance(out.joints2d, gt.joints2d);
  r.joint2d = static_cast<double>(j2.item());
  parts.emplace_back(w.joint2d, j2);
  bool first = true;
  for (const auto& [weight, term] : parts) {
    if (weight == 0.0) continue;
    const auto weighted = weight == 1.0 ? term : scale(term, static_cast<T>(weight));
    r.total = first ? weighted : add(r.total, weighted);
    first = false;
  }
  if (first) throw ConfigError("compute_losses: every loss weight is zero");
  return r;
}

}  // namespace graphormer
