// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "graphormer/errors.hpp"
#include "graphormer/graph/camera.hpp"
#include "graphormer/graph/kinematics.hpp"
#include "graphormer/graph/template_mesh.hpp"
#include "graphormer/numerics/binary_io.hpp"
#include "graphormer/rng.hpp"

namespace graphormer {

/// One synthetic training example. Point sets are row-major k x 3 (k x 2).
struct MeshSample {
  std::vector<double> joint_angles;  // J x 3 axis-angle, radians
  std::vector<double> fine_vertices;
  std::vector<double> coarse_vertices;
  std::vector<double> joints3d;
  std::vector<double> joints2d;
  std::vector<double> silhouette;  // H x W in [0, 1]
  Camera camera{1.0, 0.0, 0.0};

  bool operator==(const MeshSample&) const = default;
};

struct Dataset {
  std::size_t joints = 0, fine_vertices = 0, coarse_vertices = 0, height = 0, width = 0;
  std::vector<MeshSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  bool operator==(const Dataset&) const = default;
};

struct DatasetOptions {
  double angle_range = 0.5;
  std::size_t height = 56;
  std::size_t width = 56;
  double sigma_px = 1.0;
  std::size_t workers = 1;
};

inline MeshSample make_sample(const TemplateMesh& mesh, const Coarsening& ops, const std::vector<double>& angles,
                              const Camera& camera, const DatasetOptions& opt) {
  MeshSample s;
  s.joint_angles = angles;
  auto pose = forward_kinematics(mesh, angles);
  s.fine_vertices = std::move(pose.vertices);
  s.joints3d = std::move(pose.joints);
  s.coarse_vertices = apply_operator(*ops.down, s.fine_vertices);
  s.camera = camera;
  s.joints2d = project_points(s.joints3d, camera);
  s.silhouette = rasterize_silhouette(s.fine_vertices, camera, opt.height, opt.width, opt.sigma_px);
  return s;
}

/// Sample i draws from its own stream derive_seed(seed, {i}), so the result
/// does not depend on the worker count.
inline Dataset generate_dataset(const TemplateMesh& mesh, std::size_t count, std::uint64_t seed,
                                const DatasetOptions& opt = {}) {
  if (count < 1) throw InputError("generate_dataset: count must be >= 1");
  if (opt.height < 8 || opt.width < 8) throw InputError("generate_dataset: image must be at least 8x8");
  if (opt.angle_range < 0.0) throw InputError("generate_dataset: angle_range must be >= 0");
  const auto ops = build_coarsening(mesh);
  Dataset d{mesh.num_joints(), mesh.num_vertices(), mesh.coarse_count, opt.height, opt.width, {}};
  d.samples.resize(count);
  auto work = [&](std::size_t i) {
    Rng rng(derive_seed(seed, {i}));
    std::vector<double> angles(mesh.num_joints() * 3);
    for (auto& a : angles) a = opt.angle_range == 0.0 ? 0.0 : rng.uniform(-opt.angle_range, opt.angle_range);
    const Camera cam{rng.uniform(0.7, 1.3), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)};
    d.samples[i] = make_sample(mesh, ops, angles, cam, opt);
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(opt.workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) work(i);
    return d;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) work(i);
    });
  for (auto& t : pool) t.join();
  return d;
}

/// Mean pose over the dataset (fine, coarse, joints3d, joints2d).
inline MeshSample mean_sample(const Dataset& d) {
  if (d.empty()) throw InputError("mean_sample: empty dataset");
  MeshSample m = d.samples.front();
  auto accumulate = [&](auto member) {
    auto& acc = m.*member;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (const auto& s : d.samples)
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += (s.*member)[i];
    for (auto& v : acc) v /= static_cast<double>(d.size());
  };
  accumulate(&MeshSample::fine_vertices);
  accumulate(&MeshSample::coarse_vertices);
  accumulate(&MeshSample::joints3d);
  accumulate(&MeshSample::joints2d);
  return m;
}

// Dataset file: "GRFDATA1", u32 version, u64 count, u64 J, u64 V_fine,
// u64 V_coarse, u64 H, u64 W; then per sample the f32 fields joint_angles
// (Jx3), fine (V_fine x 3), coarse (V_coarse x 3), joints3d (Jx3),
// joints2d (Jx2), silhouette (HxW), camera (3).

inline constexpr std::string_view kDatasetMagic = "GRFDATA1";
inline constexpr std::uint32_t kDatasetVersion = 1;

inline void save_dataset(const std::string& path, const Dataset& d) {
  auto os = io::open_out(path);
  io::write_magic(os, kDatasetMagic);
  io::write_le<std::uint32_t>(os, kDatasetVersion);
  for (std::uint64_t v : {std::uint64_t(d.size()), std::uint64_t(d.joints), std::uint64_t(d.fine_vertices),
                          std::uint64_t(d.coarse_vertices), std::uint64_t(d.height), std::uint64_t(d.width)})
    io::write_le<std::uint64_t>(os, v);
  auto put = [&](const std::vector<double>& xs, std::size_t expected) {
    if (xs.size() != expected) throw DimensionError("save_dataset: sample field has wrong length");
    for (double x : xs) io::write_f32(os, x);
  };
  for (const auto& s : d.samples) {
    put(s.joint_angles, d.joints * 3);
    put(s.fine_vertices, d.fine_vertices * 3);
    put(s.coarse_vertices, d.coarse_vertices * 3);
    put(s.joints3d, d.joints * 3);
    put(s.joints2d, d.joints * 2);
    put(s.silhouette, d.height * d.width);
    for (double c : s.camera) io::write_f32(os, c);
  }
  if (!os) throw InputError("failed writing '" + path + "'");
}

inline Dataset load_dataset(const std::string& path) {
  auto is = io::open_in(path);
  io::expect_magic(is, kDatasetMagic, path);
  const auto version = io::read_le<std::uint32_t>(is);
  if (version != kDatasetVersion) throw InputError(path + ": unsupported dataset version " + std::to_string(version));
  const auto count = io::read_le<std::uint64_t>(is);
  Dataset d;
  d.joints = io::read_le<std::uint64_t>(is);
  d.fine_vertices = io::read_le<std::uint64_t>(is);
  d.coarse_vertices = io::read_le<std::uint64_t>(is);
  d.height = io::read_le<std::uint64_t>(is);
  d.width = io::read_le<std::uint64_t>(is);
  if (count > (1u << 24)) throw InputError(path + ": implausible sample count");
  auto get = [&](std::size_t n) {
    std::vector<double> xs(n);
    for (auto& x : xs) x = io::read_f32(is);
    return xs;
  };
  d.samples.resize(count);
  for (auto& s : d.samples) {
    s.joint_angles = get(d.joints * 3);
    s.fine_vertices = get(d.fine_vertices * 3);
    s.coarse_vertices = get(d.coarse_vertices * 3);
    s.joints3d = get(d.joints * 3);
    s.joints2d = get(d.joints * 2);
    s.silhouette = get(d.height * d.width);
    for (auto& c : s.camera) c = io::read_f32(is);
  }
  return d;
}

/// Rounds every field through f32, matching what a save/load cycle yields.
inline Dataset quantize_f32(Dataset d) {
  auto q = [](std::vector<double>& xs) {
    for (auto& x : xs) x = static_cast<double>(static_cast<float>(x));
  };
  for (auto& s : d.samples) {
    for (auto* field : {&s.joint_angles, &s.fine_vertices, &s.coarse_vertices, &s.joints3d, &s.joints2d, &s.silhouette})
      q(*field);
    for (auto& c : s.camera) c = static_cast<double>(static_cast<float>(c));
  }
  return d;
}

}  // namespace graphormer
