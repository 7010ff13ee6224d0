// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "graphormer/errors.hpp"

namespace graphormer {

enum class Precision { f64, f32 };
enum class FeatureSource { conv, precomputed };
/// Where the graph module sits relative to self-attention.
enum class GrbDesign { after, before, parallel };
/// residual_block: bottleneck GRB; basic_conv: one GELU(A Y W) layer;
/// mlp_equivalent: no graph module, block MLP widened to the GRB's size.
enum class GrbKind { residual_block, basic_conv, mlp_equivalent };

namespace detail {

template <typename E>
struct EnumNames;
template <>
struct EnumNames<Precision> {
  static constexpr std::array<std::pair<Precision, std::string_view>, 2> values{
      {{Precision::f64, "f64"}, {Precision::f32, "f32"}}};
};
template <>
struct EnumNames<FeatureSource> {
  static constexpr std::array<std::pair<FeatureSource, std::string_view>, 2> values{
      {{FeatureSource::conv, "conv"}, {FeatureSource::precomputed, "precomputed"}}};
};
template <>
struct EnumNames<GrbDesign> {
  static constexpr std::array<std::pair<GrbDesign, std::string_view>, 3> values{
      {{GrbDesign::after, "after"}, {GrbDesign::before, "before"}, {GrbDesign::parallel, "parallel"}}};
};
template <>
struct EnumNames<GrbKind> {
  static constexpr std::array<std::pair<GrbKind, std::string_view>, 3> values{
      {{GrbKind::residual_block, "residual_block"},
       {GrbKind::basic_conv, "basic_conv"},
       {GrbKind::mlp_equivalent, "mlp_equivalent"}}};
};

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string_view::npos ? s.size() : comma;
    auto item = trim(s.substr(start, end - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

template <typename E>
std::string to_string(E e)
  requires requires { detail::EnumNames<E>::values; }
{
  for (const auto& [v, name] : detail::EnumNames<E>::values)
    if (v == e) return std::string(name);
  return "?";
}

template <typename E>
E parse_enum(std::string_view text, std::string_view key) {
  std::string valid;
  for (const auto& [v, name] : detail::EnumNames<E>::values) {
    if (name == text) return v;
    valid += (valid.empty() ? "" : ", ") + std::string(name);
  }
  throw ConfigError(std::string(key) + ": '" + std::string(text) + "' is not one of {" + valid + "}");
}

/// Which of the three encoders carry a graph module; rendered "none", "3", "123".
struct EncoderSet {
  std::array<bool, 3> on{false, false, false};

  bool operator[](std::size_t k) const { return on.at(k); }
  bool any() const { return on[0] || on[1] || on[2]; }
  bool operator==(const EncoderSet&) const = default;

  std::string str() const {
    std::string s;
    for (std::size_t k = 0; k < 3; ++k)
      if (on[k]) s += static_cast<char>('1' + k);
    return s.empty() ? "none" : s;
  }

  static EncoderSet parse(std::string_view text, std::string_view key) {
    EncoderSet e;
    if (text == "none") return e;
    if (text.empty()) throw ConfigError(std::string(key) + ": empty encoder set (use 'none')");
    for (char c : text) {
      if (c < '1' || c > '3')
        throw ConfigError(std::string(key) + ": '" + std::string(text) + "' must be 'none' or digits from 1-3");
      e.on[static_cast<std::size_t>(c - '1')] = true;
    }
    return e;
  }
};

struct ModelConfig {
  Precision precision = Precision::f64;
  std::size_t template_limbs = 7;
  std::size_t template_segments = 1;
  std::size_t template_ring = 4;
  std::size_t coarse_vertices = 48;
  std::uint64_t template_seed = 7;
  std::size_t image_size = 56;
  std::size_t grid_size = 7;
  std::vector<std::size_t> conv_channels{8, 16, 32, 32};
  std::size_t global_dim = 64;
  FeatureSource feature_source = FeatureSource::conv;
  std::string feature_file;
  bool global_mlp = false;
  bool grid_features = true;
  std::vector<std::size_t> hidden_dims{64, 32, 16};
  std::size_t blocks = 4;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  double dropout = 0.1;
  double ln_eps = 1e-5;
  EncoderSet grb_encoders{{false, false, true}};
  GrbDesign grb_design = GrbDesign::after;
  GrbKind grb_kind = GrbKind::residual_block;

  std::size_t joints() const { return 1 + template_limbs * template_segments; }
  std::size_t grid_tokens() const { return grid_features ? grid_size * grid_size : 0; }
  std::size_t feature_channels() const { return conv_channels.empty() ? 0 : conv_channels.back(); }
  std::size_t token_dim() const { return global_dim + 3; }
  std::size_t tokens() const { return grid_tokens() + joints() + coarse_vertices; }
  std::size_t fine_vertices() const { return coarse_vertices * template_ring; }
  bool operator==(const ModelConfig&) const = default;
};

struct DataConfig {
  std::size_t train_samples = 256;
  std::size_t test_samples = 64;
  double angle_range = 0.5;
  double sigma_px = 1.0;
  std::uint64_t seed = 1234;
  bool operator==(const DataConfig&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::size_t lr_drop_epoch = 30;
  double lr_drop_factor = 10.0;
  double w_vertex_fine = 1.0;
  double w_vertex_coarse = 1.0;
  double w_joint3d = 1.0;
  double w_joint2d = 1.0;
  double mask_ratio_max = 0.3;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;
  std::size_t checkpoint_every = 10;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  /// false writes 0 in the wall_seconds column so logs are byte-comparable.
  bool record_wall_time = true;
  bool operator==(const TrainConfig&) const = default;
};

struct AblationConfig {
  std::vector<std::string> grid_features{"on", "off"};
  std::vector<std::string> grb_encoders{"none", "3"};
  std::vector<std::string> grb_design{"after"};
  std::vector<std::string> grb_kind{"basic_conv", "residual_block"};
  std::vector<std::uint64_t> seeds{1};
  bool operator==(const AblationConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  DataConfig data;
  TrainConfig train;
  AblationConfig ablation;

  bool operator==(const RunConfig&) const = default;

  /// Cross-field checks; throws ConfigError naming the offending key.
  void validate() const;
};

namespace detail {

template <typename U>
  requires(std::is_unsigned_v<U> && !std::is_same_v<U, bool>)
std::string render_value(U v) {
  return std::to_string(v);
}
inline std::string render_value(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
inline std::string render_value(bool v) { return v ? "true" : "false"; }
inline std::string render_value(const std::string& v) { return v; }
inline std::string render_value(const EncoderSet& v) { return v.str(); }
template <typename E>
  requires requires { EnumNames<E>::values; }
std::string render_value(E v) {
  return to_string(v);
}
template <typename T>
std::string render_value(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + render_value(v[i]);
  return s;
}

template <typename U>
  requires std::is_unsigned_v<U>
void parse_value(std::string_view text, std::string_view key, U& out) {
  U v{};
  auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc{} || r.ptr != text.data() + text.size())
    throw ConfigError(std::string(key) + ": '" + std::string(text) + "' is not a non-negative integer");
  out = v;
}
inline void parse_value(std::string_view text, std::string_view key, double& out) {
  double v{};
  auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc{} || r.ptr != text.data() + text.size())
    throw ConfigError(std::string(key) + ": '" + std::string(text) + "' is not a number");
  out = v;
}
inline void parse_value(std::string_view text, std::string_view key, bool& out) {
  if (text == "true" || text == "on") out = true;
  else if (text == "false" || text == "off") out = false;
  else throw ConfigError(std::string(key) + ": '" + std::string(text) + "' is not a boolean (true/false)");
}
inline void parse_value(std::string_view text, std::string_view, std::string& out) { out = std::string(text); }
inline void parse_value(std::string_view text, std::string_view key, EncoderSet& out) {
  out = EncoderSet::parse(text, key);
}
template <typename E>
  requires requires { EnumNames<E>::values; }
void parse_value(std::string_view text, std::string_view key, E& out) {
  out = parse_enum<E>(text, key);
}
template <typename T>
void parse_value(std::string_view text, std::string_view key, std::vector<T>& out) {
  std::vector<T> v;
  for (const auto& item : split_list(text)) {
    T x{};
    parse_value(item, key, x);
    v.push_back(std::move(x));
  }
  out = std::move(v);
}

/// Calls f(key, field) for every configuration key in canonical order.
template <typename Config, typename F>
void visit_fields(Config& c, F&& f) {
  auto& m = c.model;
  f("model.precision", m.precision);
  f("model.template_limbs", m.template_limbs);
  f("model.template_segments", m.template_segments);
  f("model.template_ring", m.template_ring);
  f("model.coarse_vertices", m.coarse_vertices);
  f("model.template_seed", m.template_seed);
  f("model.image_size", m.image_size);
  f("model.grid_size", m.grid_size);
  f("model.conv_channels", m.conv_channels);
  f("model.global_dim", m.global_dim);
  f("model.feature_source", m.feature_source);
  f("model.feature_file", m.feature_file);
  f("model.global_mlp", m.global_mlp);
  f("model.grid_features", m.grid_features);
  f("model.hidden_dims", m.hidden_dims);
  f("model.blocks", m.blocks);
  f("model.heads", m.heads);
  f("model.mlp_ratio", m.mlp_ratio);
  f("model.dropout", m.dropout);
  f("model.ln_eps", m.ln_eps);
  f("model.grb_encoders", m.grb_encoders);
  f("model.grb_design", m.grb_design);
  f("model.grb_kind", m.grb_kind);
  auto& d = c.data;
  f("data.train_samples", d.train_samples);
  f("data.test_samples", d.test_samples);
  f("data.angle_range", d.angle_range);
  f("data.sigma_px", d.sigma_px);
  f("data.seed", d.seed);
  auto& t = c.train;
  f("train.epochs", t.epochs);
  f("train.batch_size", t.batch_size);
  f("train.lr", t.lr);
  f("train.lr_drop_epoch", t.lr_drop_epoch);
  f("train.lr_drop_factor", t.lr_drop_factor);
  f("train.w_vertex_fine", t.w_vertex_fine);
  f("train.w_vertex_coarse", t.w_vertex_coarse);
  f("train.w_joint3d", t.w_joint3d);
  f("train.w_joint2d", t.w_joint2d);
  f("train.mask_ratio_max", t.mask_ratio_max);
  f("train.grad_clip", t.grad_clip);
  f("train.checkpoint_every", t.checkpoint_every);
  f("train.seed", t.seed);
  f("train.workers", t.workers);
  f("train.record_wall_time", t.record_wall_time);
  auto& a = c.ablation;
  f("ablation.grid_features", a.grid_features);
  f("ablation.grb_encoders", a.grb_encoders);
  f("ablation.grb_design", a.grb_design);
  f("ablation.grb_kind", a.grb_kind);
  f("ablation.seeds", a.seeds);
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  RunConfig c;
  detail::visit_fields(c, [&](std::string_view k, auto&) { keys.emplace_back(k); });
  return keys;
}

/// Canonical text: every key, fixed order, one "key = value" per line.
inline std::string render_config(const RunConfig& c) {
  std::string out;
  std::string section;
  detail::visit_fields(c, [&](std::string_view key, const auto& field) {
    const auto ns = std::string(key.substr(0, key.find('.')));
    if (!section.empty() && ns != section) out += '\n';
    section = ns;
    out += std::string(key) + " = " + detail::render_value(field) + '\n';
  });
  return out;
}

/// Applies "key = value" lines on top of `base`. '#' starts a comment.
inline RunConfig parse_config(std::string_view text, RunConfig base = {}) {
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto content = detail::trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" + content + "'");
    const auto key = detail::trim(std::string_view(content).substr(0, eq));
    const auto value = detail::trim(std::string_view(content).substr(eq + 1));
    bool found = false;
    detail::visit_fields(base, [&](std::string_view k, auto& field) {
      if (k != key) return;
      found = true;
      detail::parse_value(value, k, field);
    });
    if (!found) throw ConfigError("unknown config key '" + key + "' (line " + std::to_string(line_no) + ")");
  }
  return base;
}

inline RunConfig load_config_file(const std::string& path, RunConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

/// FNV-1a 64 of the canonical text, as 16 hex digits.
inline std::string config_hash(const RunConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : render_config(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline RunConfig desk_preset() { return RunConfig{}; }

/// Token counts and widths of the full-size model: 49 grid + 14 joint + 431
/// vertex tokens of width 2051, encoder widths 1024/256/64.
inline RunConfig paper_faithful_preset() {
  RunConfig c;
  auto& m = c.model;
  m.template_limbs = 13;
  m.template_segments = 1;
  m.template_ring = 14;
  m.coarse_vertices = 431;
  m.image_size = 224;
  m.grid_size = 7;
  m.conv_channels = {16, 32, 64, 128, 1024};
  m.global_dim = 2048;
  m.hidden_dims = {1024, 256, 64};
  c.train.epochs = 200;
  c.train.lr = 1e-4;
  c.train.lr_drop_epoch = 100;
  return c;
}

inline RunConfig preset(std::string_view name) {
  if (name == "desk") return desk_preset();
  if (name == "paper-faithful") return paper_faithful_preset();
  throw ConfigError("unknown preset '" + std::string(name) + "' (valid: desk, paper-faithful)");
}

inline void RunConfig::validate() const {
  const auto& m = model;
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(m.template_limbs >= 1 && m.template_segments >= 1 && m.template_ring >= 1,
          "model.template_*: limbs, segments and ring must be >= 1");
  require(m.coarse_vertices >= m.template_limbs * m.template_segments,
          "model.coarse_vertices: " + std::to_string(m.coarse_vertices) + " is below the bone count " +
              std::to_string(m.template_limbs * m.template_segments));
  require(m.image_size >= 8, "model.image_size: must be >= 8");
  require(m.grid_size >= 1 && m.image_size % m.grid_size == 0,
          "model.grid_size: " + std::to_string(m.grid_size) + " must divide model.image_size " +
              std::to_string(m.image_size));
  const std::size_t ratio = m.image_size / m.grid_size;
  require((ratio & (ratio - 1)) == 0, "model.image_size / model.grid_size must be a power of two");
  std::size_t halvings = 0;
  for (std::size_t r = ratio; r > 1; r /= 2) ++halvings;
  if (m.feature_source == FeatureSource::conv)
    require(m.conv_channels.size() >= std::max<std::size_t>(halvings, 1),
            "model.conv_channels: need at least " + std::to_string(std::max<std::size_t>(halvings, 1)) +
                " layers to reach the grid size");
  require(!m.conv_channels.empty(), "model.conv_channels: must list at least one layer");
  for (auto ch : m.conv_channels) require(ch >= 1, "model.conv_channels: channels must be >= 1");
  require(m.feature_source != FeatureSource::precomputed || !m.feature_file.empty(),
          "model.feature_file: required when model.feature_source = precomputed");
  require(m.global_dim >= 1, "model.global_dim: must be >= 1");
  require(m.hidden_dims.size() == 3, "model.hidden_dims: expected three encoder widths");
  require(m.blocks >= 1, "model.blocks: must be >= 1");
  require(m.heads >= 1, "model.heads: must be >= 1");
  require(m.mlp_ratio >= 1, "model.mlp_ratio: must be >= 1");
  for (std::size_t k = 0; k < 3; ++k) {
    const auto d = m.hidden_dims[k];
    require(d >= 1 && d % m.heads == 0, "model.heads: " + std::to_string(m.heads) +
                                            " does not divide encoder " + std::to_string(k + 1) + " width " +
                                            std::to_string(d));
    if (m.grb_encoders[k] && m.grb_kind != GrbKind::basic_conv)
      require(d % 2 == 0, "model.hidden_dims: encoder " + std::to_string(k + 1) + " width " + std::to_string(d) +
                              " must be even for a graph residual block");
  }
  require(m.dropout >= 0.0 && m.dropout < 1.0, "model.dropout: must be in [0, 1)");
  require(m.ln_eps > 0.0, "model.ln_eps: must be positive");
  require(data.train_samples >= 1, "data.train_samples: must be >= 1");
  require(data.test_samples >= 1, "data.test_samples: must be >= 1");
  require(data.angle_range >= 0.0, "data.angle_range: must be >= 0");
  require(data.sigma_px > 0.0, "data.sigma_px: must be positive");
  const auto& t = train;
  require(t.batch_size >= 1, "train.batch_size: must be >= 1");
  require(t.lr >= 0.0, "train.lr: must be >= 0");
  require(t.lr_drop_factor > 0.0, "train.lr_drop_factor: must be positive");
  require(t.w_vertex_fine >= 0 && t.w_vertex_coarse >= 0 && t.w_joint3d >= 0 && t.w_joint2d >= 0,
          "train.w_*: loss weights must be non-negative");
  require(t.w_vertex_fine > 0 || t.w_vertex_coarse > 0 || t.w_joint3d > 0 || t.w_joint2d > 0,
          "train.w_*: at least one loss weight must be positive");
  require(t.mask_ratio_max >= 0.0 && t.mask_ratio_max <= 1.0, "train.mask_ratio_max: must be in [0, 1]");
  require(t.grad_clip >= 0.0, "train.grad_clip: must be >= 0");
  require(t.workers >= 1, "train.workers: must be >= 1");
  const auto& a = ablation;
  for (const auto& g : a.grid_features)
    require(g == "on" || g == "off", "ablation.grid_features: '" + g + "' is not on/off");
  for (const auto& e : a.grb_encoders) EncoderSet::parse(e, "ablation.grb_encoders");
  for (const auto& d : a.grb_design) parse_enum<GrbDesign>(d, "ablation.grb_design");
  for (const auto& k : a.grb_kind) parse_enum<GrbKind>(k, "ablation.grb_kind");
  require(!a.grid_features.empty() && !a.grb_encoders.empty() && !a.grb_design.empty() && !a.grb_kind.empty() &&
              !a.seeds.empty(),
          "ablation.*: every axis needs at least one value");
}

}  // namespace graphormer
