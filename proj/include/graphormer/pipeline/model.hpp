// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graphormer/graph/adjacency.hpp"
#include "graphormer/graph/template_mesh.hpp"
#include "graphormer/pipeline/tokenize.hpp"

namespace graphormer {

/// Everything about a model that is fixed by its configuration.
struct ModelContext {
  ModelConfig config;
  TemplateMesh mesh;
  Coarsening coarsening;
  AdjacencyPtr adjacency;
  TokenLayout layout;
  std::vector<double> query_positions;  // Q x 3: rest joints, then coarse rest positions
  std::shared_ptr<const PrecomputedFeatures> precomputed;
};

inline TemplateParams template_params(const ModelConfig& m) {
  TemplateParams p;
  p.limbs = m.template_limbs;
  p.segments_per_limb = m.template_segments;
  p.ring_resolution = m.template_ring;
  p.coarse_vertices = m.coarse_vertices;
  p.seed = m.template_seed;
  return p;
}

/// `load_features` false skips reading the feature file (parameter counting).
inline ModelContext build_model_context(const ModelConfig& m, bool load_features = true) {
  ModelContext c;
  c.config = m;
  c.mesh = generate_synthetic_template(template_params(m));
  c.coarsening = build_coarsening(c.mesh);
  c.layout = {m.grid_tokens(), c.mesh.num_joints(), c.mesh.coarse_count};
  c.adjacency = token_adjacency(c.mesh, c.layout.grid);
  c.query_positions = flatten(c.mesh.rest_joints);
  const auto coarse = coarse_rest_positions(c.mesh);
  c.query_positions.insert(c.query_positions.end(), coarse.begin(), coarse.end());
  if (load_features && m.feature_source == FeatureSource::precomputed)
    c.precomputed = std::make_shared<PrecomputedFeatures>(m.feature_file, m.grid_size * m.grid_size,
                                                          m.feature_channels(), m.global_dim);
  return c;
}

template <typename T>
struct ModelParams {
  std::optional<TinyConvStack<T>> features;
  TokenizerParams<T> tokenizer;
  StackParams<T> stack;
  Tensor<T> upsampler;  // V_fine x V_coarse
  Linear<T> camera;     // d_3 -> (s, tx, ty)

  static ModelParams make(const ModelContext& ctx, Rng& rng) {
    const auto& m = ctx.config;
    ModelParams p;
    if (m.feature_source == FeatureSource::conv) p.features = TinyConvStack<T>::make(m, rng);
    p.tokenizer = TokenizerParams<T>::make(m.feature_channels(), m.global_dim, m.token_dim(), m.global_mlp, rng);
    std::array<GraphSpec, 3> graph{};
    for (std::size_t k = 0; k < 3; ++k) graph[k] = {m.grb_encoders[k], m.grb_kind, m.grb_design};
    p.stack = StackParams<T>::make(m.token_dim(), m.hidden_dims, m.blocks, m.heads, m.mlp_ratio, graph, rng);
    const auto& up = *ctx.coarsening.up;
    const auto dense = up.to_dense();
    p.upsampler = Tensor<T>::parameter({up.rows, up.cols}, std::vector<T>(dense.begin(), dense.end()));
    p.camera = Linear<T>::make(m.hidden_dims[2], 3, true, rng);
    p.camera.b->mutable_values()[0] = T(1);
    return p;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    if (features) features->visit(join_name(prefix, "features"), f);
    tokenizer.visit(join_name(prefix, "tokenizer"), f);
    stack.visit(prefix, f);
    f(join_name(prefix, "upsampler"), upsampler);
    camera.visit(join_name(prefix, "camera"), f);
  }
};

/// Query tokens (joint or vertex, indexed within the query block) whose input
/// features are replaced by zeros.
struct MaskPlan {
  std::vector<std::size_t> query_indices;
  bool empty() const { return query_indices.empty(); }
};

/// Image for the conv provider, or the feature-file row for precomputed input.
struct ModelInput {
  std::span<const double> image;
  std::size_t feature_row = 0;
};

template <typename T>
struct ModelOutput {
  Tensor<T> fine_vertices;
  Tensor<T> coarse_vertices;
  std::vector<Tensor<T>> intermediate_coarse;
  Tensor<T> joints3d;
  Tensor<T> joints2d;
  Tensor<T> camera;  // 1 x 3: s, tx, ty
  std::vector<std::vector<std::vector<Tensor<T>>>> attention;
};

template <typename T>
Tensor<T> query_positions(const ModelContext& ctx) {
  return Tensor<T>({ctx.layout.queries(), 3}, std::vector<T>(ctx.query_positions.begin(), ctx.query_positions.end()));
}

template <typename T>
Tensor<T> upsample_mesh(const Tensor<T>& coarse, const Tensor<T>& upsampler) {
  if (upsampler.cols() != coarse.rows())
    throw DimensionError("upsample_mesh: operator " + shape_string(upsampler.shape()) + " does not match coarse mesh " +
                         shape_string(coarse.shape()));
  return matmul(upsampler, coarse);
}

template <typename T>
Features<T> extract_features(const ModelContext& ctx, const ModelParams<T>& p, const ModelInput& in) {
  if (p.features) return (*p.features)(in.image);
  if (!ctx.precomputed) throw ConfigError("model has neither a conv stack nor a feature file");
  return ctx.precomputed->get<T>(in.feature_row);
}

/// Features, tokens, optional query masking, encoder stack, camera from the
/// mean final token, fine mesh by the upsampler, 2-D joints by projection.
template <typename T>
ModelOutput<T> model_forward(const ModelContext& ctx, const ModelParams<T>& p, const ModelInput& in,
                             const ForwardContext& fwd, const MaskPlan* mask = nullptr) {
  auto tokens = tokenize(extract_features(ctx, p, in), query_positions<T>(ctx), p.tokenizer, ctx.layout);
  if (fwd.training && mask && !mask->empty()) {
    std::vector<std::size_t> rows;
    for (auto q : mask->query_indices) {
      if (q >= ctx.layout.queries())
        throw InputError("mask index " + std::to_string(q) + " outside " + std::to_string(ctx.layout.queries()) +
                         " query tokens");
      rows.push_back(ctx.layout.grid + q);
    }
    tokens = zero_rows(tokens, rows);
  }
  auto s = stack_forward(ctx.adjacency, tokens, p.stack, ctx.layout, fwd);
  ModelOutput<T> out;
  out.camera = p.camera(mean_rows(s.final_tokens));
  out.coarse_vertices = s.coarse;
  out.intermediate_coarse = std::move(s.intermediate_coarse);
  out.joints3d = s.joints3d;
  out.fine_vertices = upsample_mesh(s.coarse, p.upsampler);
  out.joints2d = weak_perspective(out.joints3d, out.camera);
  out.attention = std::move(s.attention);
  return out;
}

}  // namespace graphormer
