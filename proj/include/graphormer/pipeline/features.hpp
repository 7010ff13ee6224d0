// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "graphormer/config.hpp"
#include "graphormer/encoder/params.hpp"
#include "graphormer/numerics/binary_io.hpp"

namespace graphormer {

template <typename T>
struct Features {
  Tensor<T> grid;    // g*g x c, row-major cells
  Tensor<T> global;  // 1 x c_g
};

/// Number of stride-2 layers needed to bring image_size down to grid_size.
inline std::size_t stride_two_layers(std::size_t image_size, std::size_t grid_size) {
  std::size_t n = 0;
  for (std::size_t s = image_size; s > grid_size; s /= 2) ++n;
  return n;
}

/// 3x3 convolutions (padding 1) with GELU; the first layers halve the
/// resolution until the grid size is reached, the rest keep it. The global
/// vector is a linear map of the average-pooled last layer.
template <typename T>
struct TinyConvStack {
  std::vector<Linear<T>> layers;  // (9 c_in) x c_out
  std::vector<std::size_t> strides;
  Linear<T> global;
  std::size_t image_size = 0;
  std::size_t grid_size = 0;

  static TinyConvStack make(const ModelConfig& m, Rng& rng) {
    TinyConvStack s;
    s.image_size = m.image_size;
    s.grid_size = m.grid_size;
    const std::size_t halvings = stride_two_layers(m.image_size, m.grid_size);
    if (m.conv_channels.size() < halvings)
      throw ConfigError("model.conv_channels: " + std::to_string(m.conv_channels.size()) + " layers cannot reduce " +
                        std::to_string(m.image_size) + " to " + std::to_string(m.grid_size));
    std::size_t c_in = 1;
    for (std::size_t l = 0; l < m.conv_channels.size(); ++l) {
      s.layers.push_back(Linear<T>::make(9 * c_in, m.conv_channels[l], true, rng));
      s.strides.push_back(l < halvings ? 2 : 1);
      c_in = m.conv_channels[l];
    }
    s.global = Linear<T>::make(c_in, m.global_dim, true, rng);
    return s;
  }

  Features<T> operator()(std::span<const double> image) const {
    if (image.size() != image_size * image_size)
      throw DimensionError("TinyConvStack: image has " + std::to_string(image.size()) + " pixels, expected " +
                           std::to_string(image_size * image_size));
    std::vector<T> px(image.begin(), image.end());
    Tensor<T> x({image.size(), 1}, std::move(px));
    std::size_t size = image_size;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      x = gelu(layers[l](im2col(x, size, size, 3, strides[l], 1)));
      size = (size + 2 - 3) / strides[l] + 1;
    }
    if (size != grid_size)
      throw ConfigError("TinyConvStack: final map is " + std::to_string(size) + "x" + std::to_string(size) +
                        ", expected grid " + std::to_string(grid_size));
    return {x, global(mean_rows(x))};
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l].visit(join_name(prefix, "conv" + std::to_string(l)), f);
    global.visit(join_name(prefix, "global"), f);
  }
};

/// Feature rows read from a tensor file of shape N x (g*g*c + c_g): the grid
/// map flattened cell-major, then the global vector.
class PrecomputedFeatures {
 public:
  PrecomputedFeatures(const std::string& path, std::size_t grid_cells, std::size_t channels, std::size_t global_dim)
      : cells_(grid_cells), channels_(channels), global_dim_(global_dim) {
    auto file = io::read_tensor_file(path);
    const std::size_t width = grid_cells * channels + global_dim;
    if (file.shape.size() != 2 || file.shape[1] != width)
      throw ConfigError("feature file '" + path + "' has shape " + shape_string(file.shape) + ", expected N x " +
                        std::to_string(width));
    rows_ = file.shape[0];
    values_ = std::move(file.values);
  }

  std::size_t rows() const { return rows_; }

  template <typename T>
  Features<T> get(std::size_t row) const {
    if (row >= rows_)
      throw InputError("feature row " + std::to_string(row) + " outside file with " + std::to_string(rows_) + " rows");
    const std::size_t width = cells_ * channels_ + global_dim_;
    const double* base = values_.data() + row * width;
    std::vector<T> grid(base, base + cells_ * channels_);
    std::vector<T> global(base + cells_ * channels_, base + width);
    return {Tensor<T>({cells_, channels_}, std::move(grid)), Tensor<T>({1, global_dim_}, std::move(global))};
  }

 private:
  std::size_t cells_, channels_, global_dim_;
  std::size_t rows_ = 0;
  std::vector<double> values_;
};

}  // namespace graphormer
