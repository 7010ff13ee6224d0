// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "graphormer/pipeline/model.hpp"

namespace graphormer {

struct ParamCounts {
  /// Fixed order: features, tokenizer, encoder1-3, heads, upsampler, camera.
  std::vector<std::pair<std::string, std::size_t>> modules;
  std::size_t graph = 0;  // parameters inside graph modules (part of the encoders)
  std::size_t total = 0;
};

inline std::string module_of(const std::string& name) {
  const auto head = name.substr(0, name.find('.'));
  if (head == "enc1") return "encoder1";
  if (head == "enc2") return "encoder2";
  if (head == "enc3") return "encoder3";
  if (head == "tap1" || head == "tap2" || head == "head") return "heads";
  return head;
}

template <typename T>
ParamCounts count_params(ModelParams<T>& params) {
  ParamCounts c;
  for (const char* m : {"features", "tokenizer", "encoder1", "encoder2", "encoder3", "heads", "upsampler", "camera"})
    c.modules.emplace_back(m, 0);
  params.visit(std::string{}, [&](const std::string& name, Tensor<T>& t) {
    const auto module = module_of(name);
    bool found = false;
    for (auto& [m, n] : c.modules)
      if (m == module) n += t.size(), found = true;
    if (!found) throw ContractError("count_params: parameter '" + name + "' belongs to no module");
    if (name.find(".graph.") != std::string::npos) c.graph += t.size();
    c.total += t.size();
  });
  return c;
}

/// Counts by building the parameters (in single precision to halve memory).
inline ParamCounts count_params(const ModelConfig& m) {
  const auto ctx = build_model_context(m, false);
  Rng rng(0);
  auto params = ModelParams<float>::make(ctx, rng);
  return count_params(params);
}

struct FlopEstimate {
  double total = 0.0;  // multiply-adds of one forward pass
  double graph = 0.0;  // the part spent in graph modules
};

/// Closed-form multiply-add count of every matrix product in one forward
/// pass; sparse products count one per stored entry per column.
inline FlopEstimate flops_estimate(const ModelConfig& m, const ModelContext& ctx) {
  FlopEstimate f;
  const double n = static_cast<double>(ctx.layout.total());
  const double nnz = static_cast<double>(ctx.adjacency->nonzeros());
  const double c = static_cast<double>(m.feature_channels()), cg = static_cast<double>(m.global_dim);
  const double td = static_cast<double>(m.token_dim());
  if (m.feature_source == FeatureSource::conv) {
    const std::size_t halvings = stride_two_layers(m.image_size, m.grid_size);
    std::size_t size = m.image_size, c_in = 1;
    for (std::size_t l = 0; l < m.conv_channels.size(); ++l) {
      if (l < halvings) size = (size - 1) / 2 + 1;
      f.total += static_cast<double>(size * size) * 9.0 * static_cast<double>(c_in * m.conv_channels[l]);
      c_in = m.conv_channels[l];
    }
    f.total += c * cg;
  }
  f.total += static_cast<double>(ctx.layout.grid) * (c * td + td * td);
  if (m.global_mlp) f.total += cg * cg;
  double d_in = td;
  for (std::size_t k = 0; k < 3; ++k) {
    const double d = static_cast<double>(m.hidden_dims[k]);
    double hidden = static_cast<double>(m.mlp_ratio) * d;
    double graph = 0.0;
    if (m.grb_encoders[k]) {
      if (m.grb_kind == GrbKind::residual_block) {
        const double h = d / 2;
        graph = n * d * h + n * h * h + nnz * h + n * h * d;
      } else if (m.grb_kind == GrbKind::basic_conv) {
        graph = n * d * d + nnz * d;
      } else {
        hidden += static_cast<double>(mlp_equivalent_units(m.hidden_dims[k]));
      }
    }
    const double block = 4.0 * n * d * d + 2.0 * n * n * d + 2.0 * n * d * hidden + graph;
    f.total += n * d_in * d + static_cast<double>(m.blocks) * block;
    f.graph += static_cast<double>(m.blocks) * graph;
    if (k < 2) f.total += static_cast<double>(ctx.layout.vertices) * d * 3.0;
    d_in = d;
  }
  const double d3 = static_cast<double>(m.hidden_dims[2]);
  f.total += static_cast<double>(ctx.layout.queries()) * d3 * 3.0 + d3 * 3.0;
  f.total += static_cast<double>(ctx.mesh.num_vertices()) * static_cast<double>(ctx.layout.vertices) * 3.0;
  return f;
}

inline FlopEstimate flops_estimate(const ModelConfig& m) { return flops_estimate(m, build_model_context(m, false)); }

/// Closed-form parameter increase over the same model with every grb flag off.
inline std::size_t graph_delta_closed_form(const ModelConfig& m) {
  std::size_t delta = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    if (!m.grb_encoders[k]) continue;
    const std::size_t d = m.hidden_dims[k];
    std::size_t per_block = 0;
    switch (m.grb_kind) {
      case GrbKind::residual_block: per_block = grb_parameter_count(d); break;
      case GrbKind::basic_conv: per_block = d * d; break;
      case GrbKind::mlp_equivalent: per_block = mlp_equivalent_units(d) * (2 * d + 1); break;
    }
    delta += m.blocks * per_block;
  }
  return delta;
}

}  // namespace graphormer
