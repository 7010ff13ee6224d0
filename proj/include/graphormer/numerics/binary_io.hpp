// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "graphormer/errors.hpp"
#include "graphormer/numerics/tensor.hpp"

// Little-endian primitives shared by the dataset, tensor and checkpoint files.

namespace graphormer::io {

template <typename U>
void write_le(std::ostream& os, U value) {
  static_assert(std::is_unsigned_v<U>);
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  os.write(bytes, sizeof(U));
}

template <typename U>
U read_le(std::istream& is) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw InputError("unexpected end of file");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

inline void write_f32(std::ostream& os, double v) { write_le(os, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
inline float read_f32(std::istream& is) { return std::bit_cast<float>(read_le<std::uint32_t>(is)); }
inline void write_f64(std::ostream& os, double v) { write_le(os, std::bit_cast<std::uint64_t>(v)); }
inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_le<std::uint64_t>(is)); }

/// Native-width scalar (4 or 8 bytes), bit exact.
template <typename T>
void write_scalar(std::ostream& os, T v) {
  if constexpr (sizeof(T) == 4) write_le(os, std::bit_cast<std::uint32_t>(v));
  else write_le(os, std::bit_cast<std::uint64_t>(v));
}
template <typename T>
T read_scalar(std::istream& is) {
  if constexpr (sizeof(T) == 4) return std::bit_cast<T>(read_le<std::uint32_t>(is));
  else return std::bit_cast<T>(read_le<std::uint64_t>(is));
}

inline void write_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), magic.size()); }

inline void expect_magic(std::istream& is, std::string_view magic, const std::string& what) {
  std::string got(magic.size(), '\0');
  if (!is.read(got.data(), magic.size()) || got != magic) throw InputError(what + ": bad magic header");
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_le<std::uint64_t>(os, s.size());
  os.write(s.data(), s.size());
}

inline std::string read_string(std::istream& is) {
  const auto n = read_le<std::uint64_t>(is);
  if (n > (1ULL << 32)) throw InputError("string length " + std::to_string(n) + " is implausible");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw InputError("unexpected end of file");
  return s;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open '" + path + "' for writing");
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open '" + path + "'");
  return is;
}

// Tensor file: "GRFTENS1", u32 version, u32 ndim, u64 extents..., f32 values.

inline constexpr std::string_view kTensorMagic = "GRFTENS1";
inline constexpr std::uint32_t kTensorVersion = 1;

struct TensorFile {
  Shape shape;
  std::vector<double> values;
};

inline void write_tensor_file(const std::string& path, const Shape& shape, const std::vector<double>& values) {
  if (shape_size(shape) != values.size()) throw DimensionError("write_tensor_file: shape/value count mismatch");
  auto os = open_out(path);
  write_magic(os, kTensorMagic);
  write_le<std::uint32_t>(os, kTensorVersion);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
  for (auto e : shape) write_le<std::uint64_t>(os, e);
  for (double v : values) write_f32(os, v);
  if (!os) throw InputError("failed writing '" + path + "'");
}

inline TensorFile read_tensor_file(const std::string& path) {
  auto is = open_in(path);
  expect_magic(is, kTensorMagic, path);
  const auto version = read_le<std::uint32_t>(is);
  if (version != kTensorVersion) throw InputError(path + ": unsupported tensor file version " + std::to_string(version));
  TensorFile t;
  const auto ndim = read_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < ndim; ++i) t.shape.push_back(read_le<std::uint64_t>(is));
  t.values.resize(shape_size(t.shape));
  for (auto& v : t.values) v = read_f32(is);
  return t;
}

}  // namespace graphormer::io
