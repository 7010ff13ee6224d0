// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "graphormer/errors.hpp"
#include "graphormer/graph/template_mesh.hpp"

namespace graphormer {

struct Pose {
  std::vector<double> vertices;  // V x 3 row-major
  std::vector<double> joints;    // J x 3 row-major
};

inline Mat3 axis_angle_to_matrix(const Vec3& aa) {
  const double angle = aa.norm();
  if (angle == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
}

inline Vec3 matrix_to_axis_angle(const Mat3& r) {
  Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

/// Rigid forward kinematics. A joint's rotation (axis-angle, J x 3) turns the
/// bone ending at that joint about its parent; the root's turns everything
/// about the root. Positions are written as rest + displacement so identity
/// rotations reproduce the rest pose exactly.
inline Pose forward_kinematics(const TemplateMesh& mesh, const std::vector<double>& angles) {
  const std::size_t nj = mesh.num_joints();
  if (angles.size() != nj * 3)
    throw InputError("forward_kinematics: expected " + std::to_string(nj * 3) + " angle values, got " +
                         std::to_string(angles.size()));
  std::vector<Mat3> global(nj);
  std::vector<Vec3> pos(nj);
  for (std::size_t j = 0; j < nj; ++j) {
    const Mat3 local = axis_angle_to_matrix(Vec3(angles[j * 3], angles[j * 3 + 1], angles[j * 3 + 2]));
    const int p = mesh.parents[j];
    if (p < 0) {
      global[j] = local;
      pos[j] = mesh.rest_joints[j];
      continue;
    }
    if (static_cast<std::size_t>(p) >= j) throw InputError("forward_kinematics: joints must follow their parents");
    global[j] = global[p] * local;
    const Vec3 offset = mesh.rest_joints[j] - mesh.rest_joints[p];
    pos[j] = mesh.rest_joints[j] + (pos[p] - mesh.rest_joints[p]) + (global[j] - Mat3::Identity()) * offset;
  }
  Pose out;
  out.joints = flatten(pos);
  out.vertices.reserve(mesh.num_vertices() * 3);
  for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
    const std::size_t j = mesh.skinning[v];
    const int p = mesh.parents[j];
    // Vertices move with the driving joint's rotation about the bone's base.
    const std::size_t base = p < 0 ? j : static_cast<std::size_t>(p);
    const Vec3 rel = mesh.rest_vertices[v] - mesh.rest_joints[base];
    const Vec3 x = mesh.rest_vertices[v] + (pos[base] - mesh.rest_joints[base]) + (global[j] - Mat3::Identity()) * rel;
    out.vertices.insert(out.vertices.end(), {x.x(), x.y(), x.z()});
  }
  return out;
}

}  // namespace graphormer
