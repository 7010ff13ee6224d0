// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include <Eigen/SVD>

#include "graphormer/errors.hpp"
#include "graphormer/graph/template_mesh.hpp"

namespace graphormer {

struct Alignment {
  std::vector<double> aligned;  // k x 3
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  /// Set when the similarity fit is ill-posed; only translation was applied.
  bool degenerate = false;
};

namespace detail {

inline Eigen::Matrix<double, Eigen::Dynamic, 3> as_points(const std::vector<double>& v) {
  if (v.size() % 3 != 0) throw DimensionError("point set size " + std::to_string(v.size()) + " is not k x 3");
  Eigen::Matrix<double, Eigen::Dynamic, 3> m(static_cast<Eigen::Index>(v.size() / 3), 3);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index c = 0; c < 3; ++c) m(i, c) = v[static_cast<std::size_t>(i * 3 + c)];
  return m;
}

inline std::vector<double> to_flat(const Eigen::Matrix<double, Eigen::Dynamic, 3>& m) {
  std::vector<double> v(static_cast<std::size_t>(m.rows()) * 3);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index c = 0; c < 3; ++c) v[static_cast<std::size_t>(i * 3 + c)] = m(i, c);
  return v;
}

}  // namespace detail

/// Similarity transform (scale, proper rotation, translation) of `pred` that
/// best matches `gt` in least squares, from the SVD of the cross-covariance.
inline Alignment procrustes_align(const std::vector<double>& pred, const std::vector<double>& gt) {
  if (pred.size() != gt.size()) throw DimensionError("procrustes_align: point sets differ in size");
  const auto p = detail::as_points(pred);
  const auto g = detail::as_points(gt);
  if (p.rows() < 3) throw InputError("procrustes_align: need at least 3 points");
  const Vec3 mp = p.colwise().mean().transpose(), mg = g.colwise().mean().transpose();
  const Eigen::Matrix<double, Eigen::Dynamic, 3> x = p.rowwise() - mp.transpose();
  const Eigen::Matrix<double, Eigen::Dynamic, 3> y = g.rowwise() - mg.transpose();
  Alignment a;
  const double var_p = x.squaredNorm();
  const Eigen::JacobiSVD<Mat3> gt_spread(y.transpose() * y);
  const auto sg = gt_spread.singularValues();
  if (var_p <= 1e-300 || sg(0) <= 1e-300 || sg(1) <= 1e-12 * sg(0)) {
    a.degenerate = true;
    a.translation = mg - mp;
    a.aligned = detail::to_flat(p.rowwise() + a.translation.transpose());
    return a;
  }
  const Mat3 k = x.transpose() * y;  // sum_i x_i y_i^T
  const Eigen::JacobiSVD<Mat3> svd(k, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU(), v = svd.matrixV();
  Vec3 z(1.0, 1.0, (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
  a.rotation = v * z.asDiagonal() * u.transpose();
  a.scale = (svd.singularValues().array() * z.array()).sum() / var_p;
  a.translation = mg - a.scale * a.rotation * mp;
  const Eigen::Matrix<double, Eigen::Dynamic, 3> out =
      ((a.scale * (p * a.rotation.transpose())).rowwise() + a.translation.transpose());
  a.aligned = detail::to_flat(out);
  return a;
}

/// Mean Euclidean distance between corresponding points of two k x 3 sets.
inline double mean_point_error(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty() || a.size() % 3 != 0)
    throw DimensionError("mean_point_error: point sets " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + " values");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); i += 3) {
    const double dx = a[i] - b[i], dy = a[i + 1] - b[i + 1], dz = a[i + 2] - b[i + 2];
    s += std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return s / static_cast<double>(a.size() / 3);
}

/// Errors in template length units.
struct PoseMetrics {
  double mpjpe = 0.0;
  double pa_mpjpe = 0.0;
  double mpve = 0.0;
};

inline PoseMetrics pose_metrics(const std::vector<double>& pred_joints, const std::vector<double>& gt_joints,
                                const std::vector<double>& pred_vertices, const std::vector<double>& gt_vertices) {
  PoseMetrics m;
  m.mpjpe = mean_point_error(pred_joints, gt_joints);
  m.pa_mpjpe = mean_point_error(procrustes_align(pred_joints, gt_joints).aligned, gt_joints);
  m.mpve = mean_point_error(pred_vertices, gt_vertices);
  return m;
}

/// Reported metric scale: template units x 1000.
inline constexpr double kMetricScale = 1000.0;

}  // namespace graphormer
