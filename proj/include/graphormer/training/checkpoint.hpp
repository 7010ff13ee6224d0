// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "graphormer/config.hpp"
#include "graphormer/numerics/binary_io.hpp"
#include "graphormer/pipeline/model.hpp"
#include "graphormer/training/optim.hpp"

namespace graphormer {

// Checkpoint file (little-endian):
//   "GRFMCKPT", u32 version, u32 scalar bytes (4 or 8),
//   string canonical config, u64 epoch, u64 step, string rng state,
//   u64 parameter count, then per parameter: string name, u32 ndim,
//   u64 extents, scalars; then the optimizer: f64 beta1, beta2, eps, u64 step,
//   and per parameter the first- and second-moment scalars.
// Strings are u64 length + bytes; scalars are the model's native width.

inline constexpr std::string_view kCheckpointMagic = "GRFMCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct NamedValues {
  std::string name;
  Shape shape;
  std::vector<T> values;
  bool operator==(const NamedValues&) const = default;
};

template <typename T>
struct Checkpoint {
  RunConfig config;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::string rng_state;
  std::vector<NamedValues<T>> params;
  AdamState<T> adam;
  bool operator==(const Checkpoint&) const = default;
};

template <typename T>
std::vector<NamedValues<T>> snapshot_params(ModelParams<T>& p) {
  std::vector<NamedValues<T>> out;
  p.visit(std::string{}, [&](const std::string& name, Tensor<T>& t) { out.push_back({name, t.shape(), t.to_vector()}); });
  return out;
}

/// Copies stored values into matching parameters; names and shapes must agree.
template <typename T>
void restore_params(ModelParams<T>& p, const std::vector<NamedValues<T>>& stored) {
  std::size_t i = 0;
  p.visit(std::string{}, [&](const std::string& name, Tensor<T>& t) {
    if (i >= stored.size()) throw ConfigError("checkpoint has fewer parameters than the model (missing '" + name + "')");
    const auto& s = stored[i++];
    if (s.name != name || s.shape != t.shape())
      throw ConfigError("checkpoint parameter '" + s.name + "' " + shape_string(s.shape) + " does not match model '" +
                        name + "' " + shape_string(t.shape()));
    std::copy(s.values.begin(), s.values.end(), t.mutable_values().begin());
  });
  if (i != stored.size()) throw ConfigError("checkpoint has more parameters than the model");
}

template <typename T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& c) {
  auto os = io::open_out(path);
  io::write_magic(os, kCheckpointMagic);
  io::write_le<std::uint32_t>(os, kCheckpointVersion);
  io::write_le<std::uint32_t>(os, sizeof(T));
  io::write_string(os, render_config(c.config));
  io::write_le<std::uint64_t>(os, c.epoch);
  io::write_le<std::uint64_t>(os, c.step);
  io::write_string(os, c.rng_state);
  io::write_le<std::uint64_t>(os, c.params.size());
  for (const auto& p : c.params) {
    io::write_string(os, p.name);
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.shape.size()));
    for (auto e : p.shape) io::write_le<std::uint64_t>(os, e);
    for (T v : p.values) io::write_scalar(os, v);
  }
  io::write_f64(os, c.adam.beta1);
  io::write_f64(os, c.adam.beta2);
  io::write_f64(os, c.adam.eps);
  io::write_le<std::uint64_t>(os, c.adam.step);
  if (c.adam.m.size() != c.params.size() || c.adam.v.size() != c.params.size())
    throw ContractError("save_checkpoint: optimizer state does not cover every parameter");
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    for (T v : c.adam.m[i]) io::write_scalar(os, v);
    for (T v : c.adam.v[i]) io::write_scalar(os, v);
  }
  if (!os) throw InputError("failed writing '" + path + "'");
}

/// Scalar width stored in a checkpoint, so callers can pick the precision.
inline std::uint32_t checkpoint_scalar_bytes(const std::string& path) {
  auto is = io::open_in(path);
  io::expect_magic(is, kCheckpointMagic, path);
  const auto version = io::read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw InputError(path + ": unsupported checkpoint version " + std::to_string(version));
  return io::read_le<std::uint32_t>(is);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  auto is = io::open_in(path);
  io::expect_magic(is, kCheckpointMagic, path);
  const auto version = io::read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw InputError(path + ": unsupported checkpoint version " + std::to_string(version));
  const auto bytes = io::read_le<std::uint32_t>(is);
  if (bytes != sizeof(T))
    throw InputError(path + ": stores " + std::to_string(bytes * 8) + "-bit scalars, expected " +
                     std::to_string(sizeof(T) * 8));
  Checkpoint<T> c;
  c.config = parse_config(io::read_string(is));
  c.epoch = io::read_le<std::uint64_t>(is);
  c.step = io::read_le<std::uint64_t>(is);
  c.rng_state = io::read_string(is);
  const auto n = io::read_le<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    NamedValues<T> p;
    p.name = io::read_string(is);
    const auto ndim = io::read_le<std::uint32_t>(is);
    if (ndim == 0 || ndim > 8) throw InputError(path + ": implausible rank for '" + p.name + "'");
    for (std::uint32_t d = 0; d < ndim; ++d) p.shape.push_back(io::read_le<std::uint64_t>(is));
    p.values.resize(shape_size(p.shape));
    for (auto& v : p.values) v = io::read_scalar<T>(is);
    c.params.push_back(std::move(p));
  }
  c.adam.beta1 = io::read_f64(is);
  c.adam.beta2 = io::read_f64(is);
  c.adam.eps = io::read_f64(is);
  c.adam.step = io::read_le<std::uint64_t>(is);
  for (const auto& p : c.params) {
    std::vector<T> m(p.values.size()), v(p.values.size());
    for (auto& x : m) x = io::read_scalar<T>(is);
    for (auto& x : v) x = io::read_scalar<T>(is);
    c.adam.m.push_back(std::move(m));
    c.adam.v.push_back(std::move(v));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw InputError(path + ": trailing bytes after checkpoint");
  return c;
}

}  // namespace graphormer
