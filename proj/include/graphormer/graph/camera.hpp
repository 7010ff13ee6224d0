// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "graphormer/errors.hpp"

namespace graphormer {

/// Weak-perspective camera (s, tx, ty): (u, v) = s * (x, y) + t.
using Camera = std::array<double, 3>;

inline std::vector<double> project_points(const std::vector<double>& points, const Camera& cam) {
  if (points.size() % 3 != 0) throw DimensionError("project_points: expected k x 3 points");
  std::vector<double> out;
  out.reserve(points.size() / 3 * 2);
  for (std::size_t i = 0; i < points.size(); i += 3) {
    out.push_back(cam[0] * points[i] + cam[1]);
    out.push_back(cam[0] * points[i + 1] + cam[2]);
  }
  return out;
}

struct PixelCoord {
  double col;
  double row;
};

/// Normalized image coordinates [-1, 1]^2 (y up) to continuous pixel coordinates.
inline PixelCoord to_pixel(double u, double v, std::size_t height, std::size_t width) {
  return {(u + 1.0) * 0.5 * static_cast<double>(width), (1.0 - v) * 0.5 * static_cast<double>(height)};
}

/// Gaussian splat of every projected vertex (support 3 sigma), clamped to
/// [0, 1]. Returns height x width row-major.
inline std::vector<double> rasterize_silhouette(const std::vector<double>& vertices, const Camera& cam,
                                                std::size_t height, std::size_t width, double sigma_px = 1.0) {
  if (height == 0 || width == 0) throw InputError("rasterize_silhouette: empty image");
  if (!(sigma_px > 0.0)) throw InputError("rasterize_silhouette: sigma must be positive");
  std::vector<double> img(height * width, 0.0);
  const auto uv = project_points(vertices, cam);
  const double reach = 3.0 * sigma_px;
  const double inv = 1.0 / (2.0 * sigma_px * sigma_px);
  for (std::size_t i = 0; i < uv.size(); i += 2) {
    const auto [cx, cy] = to_pixel(uv[i], uv[i + 1], height, width);
    const long r0 = std::max(0L, static_cast<long>(std::floor(cy - reach)));
    const long r1 = std::min(static_cast<long>(height) - 1, static_cast<long>(std::ceil(cy + reach)));
    const long c0 = std::max(0L, static_cast<long>(std::floor(cx - reach)));
    const long c1 = std::min(static_cast<long>(width) - 1, static_cast<long>(std::ceil(cx + reach)));
    for (long r = r0; r <= r1; ++r)
      for (long c = c0; c <= c1; ++c) {
        const double dx = static_cast<double>(c) - cx, dy = static_cast<double>(r) - cy;
        const double d2 = dx * dx + dy * dy;
        if (d2 <= reach * reach) img[static_cast<std::size_t>(r) * width + static_cast<std::size_t>(c)] += std::exp(-d2 * inv);
      }
  }
  for (double& p : img) p = std::min(p, 1.0);
  return img;
}

}  // namespace graphormer
