// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "graphormer/errors.hpp"
#include "graphormer/numerics/ops.hpp"
#include "graphormer/rng.hpp"

namespace graphormer {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Edge = std::pair<std::size_t, std::size_t>;

/// Rest-pose articulated tube body: rings of vertices around the bones of a
/// kinematic tree. Each ring is one coarse vertex.
///
/// Skinning convention: the bone from joint p to its child c is driven by
/// c's rotation (about p), so every non-root joint angle moves geometry.
struct TemplateMesh {
  std::vector<Vec3> rest_vertices;
  std::vector<Edge> edges;          // undirected, stored once with first < second
  std::vector<int> parents;         // parents[0] == -1
  std::vector<Vec3> rest_joints;    // absolute rest positions
  std::vector<std::size_t> skinning;    // vertex -> driving joint
  std::vector<std::size_t> coarse_map;  // vertex -> coarse group
  std::size_t coarse_count = 0;

  std::size_t num_vertices() const { return rest_vertices.size(); }
  std::size_t num_joints() const { return parents.size(); }

  Vec3 rest_offset(std::size_t joint) const {
    return parents[joint] < 0 ? rest_joints[joint] : Vec3(rest_joints[joint] - rest_joints[parents[joint]]);
  }

  /// Throws InputError on any broken structural invariant.
  void validate() const {
    const std::size_t nv = num_vertices(), nj = num_joints();
    for (const auto& [a, b] : edges) {
      if (a >= nv || b >= nv) throw InputError("edge index out of range");
      if (a == b) throw InputError("self edge on vertex " + std::to_string(a));
    }
    if (rest_joints.size() != nj) throw InputError("rest_joints/parents size mismatch");
    std::size_t roots = 0;
    for (std::size_t j = 0; j < nj; ++j) {
      if (parents[j] < 0) {
        ++roots;
        continue;
      }
      if (static_cast<std::size_t>(parents[j]) >= nj) throw InputError("parent index out of range");
      // Walk to the root; more than nj steps means a cycle.
      std::size_t steps = 0;
      for (int k = static_cast<int>(j); k >= 0; k = parents[k])
        if (++steps > nj) throw InputError("skeleton contains a cycle through joint " + std::to_string(j));
    }
    if (roots != 1) throw InputError("skeleton must have exactly one root, found " + std::to_string(roots));
    if (skinning.size() != nv || coarse_map.size() != nv) throw InputError("per-vertex maps have wrong length");
    std::vector<std::size_t> members(coarse_count, 0);
    for (std::size_t v = 0; v < nv; ++v) {
      if (skinning[v] >= nj) throw InputError("skinning joint out of range");
      if (coarse_map[v] >= coarse_count) throw InputError("coarse group out of range");
      ++members[coarse_map[v]];
    }
    for (std::size_t g = 0; g < coarse_count; ++g)
      if (members[g] == 0) throw InputError("coarse group " + std::to_string(g) + " is empty");
  }

  std::size_t tree_depth() const {
    std::size_t depth = 0;
    for (std::size_t j = 0; j < num_joints(); ++j) {
      std::size_t d = 0;
      for (int k = parents[j]; k >= 0; k = parents[k]) ++d;
      depth = std::max(depth, d);
    }
    return depth;
  }
};

struct TemplateParams {
  std::size_t limbs = 13;
  std::size_t segments_per_limb = 1;
  std::size_t ring_resolution = 14;
  /// Total rings (= coarse vertices); 0 means two rings per bone.
  std::size_t coarse_vertices = 431;
  std::uint64_t seed = 7;
  double ring_radius = 0.05;
  double min_limb_length = 0.35;
  double max_limb_length = 0.5;
};

namespace detail {

inline std::pair<Vec3, Vec3> perpendicular_frame(const Vec3& dir) {
  Vec3 helper = std::abs(dir.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  Vec3 u = dir.cross(helper).normalized();
  Vec3 v = dir.cross(u).normalized();
  return {u, v};
}

inline Mat3 random_rotation(Rng& rng) {
  // Uniform unit quaternion (Shoemake).
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
  Eigen::Quaterniond q(a * std::sin(2 * std::numbers::pi * u2), a * std::cos(2 * std::numbers::pi * u2),
                       b * std::sin(2 * std::numbers::pi * u3), b * std::cos(2 * std::numbers::pi * u3));
  return q.normalized().toRotationMatrix();
}

}  // namespace detail

/// Deterministic tube-body generator: J = 1 + limbs * segments_per_limb joints,
/// limbs radiate from the root, every bone carries a run of vertex rings.
inline TemplateMesh generate_synthetic_template(const TemplateParams& p) {
  if (p.limbs < 1 || p.segments_per_limb < 1 || p.ring_resolution < 1)
    throw InputError("template parameters must be >= 1");
  const std::size_t bones = p.limbs * p.segments_per_limb;
  const std::size_t rings = p.coarse_vertices == 0 ? 2 * bones : p.coarse_vertices;
  if (rings < bones)
    throw InputError("coarse vertex count " + std::to_string(rings) + " is below the bone count " +
                     std::to_string(bones));

  Rng rng(derive_seed(p.seed, {0x7e3a11}));
  TemplateMesh mesh;
  mesh.parents.push_back(-1);
  mesh.rest_joints.push_back(Vec3::Zero());

  const Mat3 spin = detail::random_rotation(rng);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t limb = 0; limb < p.limbs; ++limb) {
    // Fibonacci sphere directions, rotated by a seeded global spin.
    const double y = p.limbs == 1 ? 1.0 : 1.0 - 2.0 * (static_cast<double>(limb) + 0.5) / static_cast<double>(p.limbs);
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double theta = golden * static_cast<double>(limb);
    Vec3 dir = spin * Vec3(r * std::cos(theta), y, r * std::sin(theta));
    const double length = rng.uniform(p.min_limb_length, p.max_limb_length);
    int parent = 0;
    for (std::size_t s = 0; s < p.segments_per_limb; ++s) {
      if (s > 0) {
        const Vec3 jitter(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
        dir = (dir + jitter).normalized();
      }
      const double seg = length / static_cast<double>(p.segments_per_limb) * rng.uniform(0.9, 1.1);
      mesh.rest_joints.push_back(mesh.rest_joints[parent] + seg * dir);
      mesh.parents.push_back(parent);
      parent = static_cast<int>(mesh.parents.size() - 1);
    }
  }

  // Bone b ends at joint b + 1. Rings are spread as evenly as possible.
  std::vector<std::size_t> first_ring(bones), last_ring(bones);
  const std::size_t res = p.ring_resolution;
  std::size_t ring_id = 0;
  for (std::size_t b = 0; b < bones; ++b) {
    const std::size_t child = b + 1;
    const std::size_t parent = static_cast<std::size_t>(mesh.parents[child]);
    const std::size_t count = rings / bones + (b < rings % bones ? 1 : 0);
    const Vec3 from = mesh.rest_joints[parent], to = mesh.rest_joints[child];
    const Vec3 dir = (to - from).normalized();
    const auto [u, v] = detail::perpendicular_frame(dir);
    first_ring[b] = ring_id;
    for (std::size_t k = 0; k < count; ++k, ++ring_id) {
      const Vec3 center = from + (static_cast<double>(k) + 0.5) / static_cast<double>(count) * (to - from);
      for (std::size_t m = 0; m < res; ++m) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(res);
        mesh.rest_vertices.push_back(center + p.ring_radius * (std::cos(a) * u + std::sin(a) * v));
        mesh.skinning.push_back(child);
        mesh.coarse_map.push_back(ring_id);
      }
      const std::size_t base = ring_id * res;
      if (res == 2) mesh.edges.emplace_back(base, base + 1);
      if (res >= 3)
        for (std::size_t m = 0; m < res; ++m) {
          std::size_t a = base + m, c = base + (m + 1) % res;
          mesh.edges.emplace_back(std::min(a, c), std::max(a, c));
        }
      if (k > 0)
        for (std::size_t m = 0; m < res; ++m) mesh.edges.emplace_back(base - res + m, base + m);
    }
    last_ring[b] = ring_id - 1;
  }
  mesh.coarse_count = ring_id;

  auto link_rings = [&](std::size_t ra, std::size_t rb) {
    for (std::size_t m = 0; m < res; ++m)
      mesh.edges.emplace_back(std::min(ra, rb) * res + m, std::max(ra, rb) * res + m);
  };
  std::vector<std::size_t> root_bones;
  for (std::size_t b = 0; b < bones; ++b) {
    const int parent = mesh.parents[b + 1];
    if (parent == 0) root_bones.push_back(b);
    else link_rings(last_ring[static_cast<std::size_t>(parent) - 1], first_ring[b]);
  }
  // Bones leaving the root are stitched into a loop around it.
  if (root_bones.size() == 2) link_rings(first_ring[root_bones[0]], first_ring[root_bones[1]]);
  if (root_bones.size() >= 3)
    for (std::size_t i = 0; i < root_bones.size(); ++i)
      link_rings(first_ring[root_bones[i]], first_ring[root_bones[(i + 1) % root_bones.size()]]);

  std::sort(mesh.edges.begin(), mesh.edges.end());
  mesh.edges.erase(std::unique(mesh.edges.begin(), mesh.edges.end()), mesh.edges.end());
  mesh.validate();
  return mesh;
}

/// Geometric coarse/fine operators: down averages each group, up0 copies
/// each group's coarse vertex back to its members.
struct Coarsening {
  std::shared_ptr<const SparseMatrix> down;  // V_coarse x V_fine
  std::shared_ptr<const SparseMatrix> up;    // V_fine x V_coarse
};

inline Coarsening build_coarsening(const TemplateMesh& mesh) {
  const std::size_t nv = mesh.num_vertices(), nc = mesh.coarse_count;
  std::vector<std::vector<std::size_t>> members(nc);
  for (std::size_t v = 0; v < nv; ++v) members.at(mesh.coarse_map[v]).push_back(v);
  SparseMatrix down;
  down.rows = nc;
  down.cols = nv;
  down.row_begin.push_back(0);
  for (std::size_t g = 0; g < nc; ++g) {
    if (members[g].empty()) throw InputError("coarse group " + std::to_string(g) + " is empty");
    const double w = 1.0 / static_cast<double>(members[g].size());
    for (auto v : members[g]) {
      down.col_index.push_back(v);
      down.value.push_back(w);
    }
    down.row_begin.push_back(down.col_index.size());
  }
  SparseMatrix up;
  up.rows = nv;
  up.cols = nc;
  up.row_begin.push_back(0);
  for (std::size_t v = 0; v < nv; ++v) {
    up.col_index.push_back(mesh.coarse_map[v]);
    up.value.push_back(1.0);
    up.row_begin.push_back(up.col_index.size());
  }
  return {std::make_shared<SparseMatrix>(std::move(down)), std::make_shared<SparseMatrix>(std::move(up))};
}

/// Applies a sparse operator to k x 3 points stored row-major.
inline std::vector<double> apply_operator(const SparseMatrix& op, const std::vector<double>& points) {
  if (points.size() != op.cols * 3) throw DimensionError("apply_operator: point count does not match operator");
  std::vector<double> out(op.rows * 3, 0.0);
  for (std::size_t i = 0; i < op.rows; ++i)
    for (std::size_t k = op.row_begin[i]; k < op.row_begin[i + 1]; ++k)
      for (std::size_t c = 0; c < 3; ++c) out[i * 3 + c] += op.value[k] * points[op.col_index[k] * 3 + c];
  return out;
}

inline std::vector<double> flatten(const std::vector<Vec3>& pts) {
  std::vector<double> out;
  out.reserve(pts.size() * 3);
  for (const auto& p : pts) out.insert(out.end(), {p.x(), p.y(), p.z()});
  return out;
}

/// Coarse-vertex rest positions (ring centroids), k x 3 row-major.
inline std::vector<double> coarse_rest_positions(const TemplateMesh& mesh) {
  return apply_operator(*build_coarsening(mesh).down, flatten(mesh.rest_vertices));
}

/// Vertices as "v" lines, edges as degenerate faces "f a b b" (1-based).
inline void write_obj(const std::string& path, const std::vector<double>& vertices, const std::vector<Edge>& edges) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot open '" + path + "' for writing");
  os.precision(9);
  for (std::size_t i = 0; i + 2 < vertices.size(); i += 3)
    os << "v " << vertices[i] << ' ' << vertices[i + 1] << ' ' << vertices[i + 2] << '\n';
  for (const auto& [a, b] : edges) os << "f " << a + 1 << ' ' << b + 1 << ' ' << b + 1 << '\n';
  if (!os) throw InputError("failed writing '" + path + "'");
}

}  // namespace graphormer
