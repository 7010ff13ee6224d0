// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphormer/pipeline/accounting.hpp"
#include "graphormer/training/trainer.hpp"

namespace graphormer::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Flags shared by every subcommand.
struct CommonOptions {
  std::string preset = "desk";
  std::string config_path;
  std::vector<std::string> overrides;  // "key=value"
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
};

/// Preset, then config file, then --set overrides, then --seed / --workers.
inline RunConfig resolve_config(const CommonOptions& o) {
  auto cfg = preset(o.preset);
  if (!o.config_path.empty()) {
    if (!std::filesystem::exists(o.config_path)) throw ConfigError("config file '" + o.config_path + "' not found");
    cfg = load_config_file(o.config_path, cfg);
  }
  for (const auto& kv : o.overrides) {
    if (kv.find('=') == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg = parse_config(kv, cfg);
  }
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.workers) cfg.train.workers = *o.workers;
  cfg.validate();
  return cfg;
}

inline bool debug_checks_enabled() {
  const char* v = std::getenv("GRAPHORMER_DEBUG_CHECKS");
  return v && std::string(v) == "1";
}

/// Runs fn, mapping library errors onto the exit-code contract.
template <typename F>
int guarded(std::ostream& err, F&& fn) {
  try {
    return fn();
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

/// Calls fn.template operator()<T>() with T the configured scalar type.
template <typename F>
decltype(auto) with_precision(Precision p, F&& fn) {
  if (p == Precision::f32) return fn.template operator()<float>();
  return fn.template operator()<double>();
}

// train

inline int cmd_train(const RunConfig& cfg, const std::string& out_dir, std::ostream& out) {
  if (out_dir.empty()) throw ConfigError("train: --out is required");
  const auto ctx = build_model_context(cfg.model);
  const auto data = generate_train_data(ctx, cfg);
  out << "train: " << data.train.size() << " train / " << data.test.size() << " test samples, " << cfg.train.epochs
      << " epochs, config " << config_hash(cfg) << '\n';
  TrainOptions opt;
  opt.out_dir = out_dir;
  opt.debug_checks = debug_checks_enabled();
  opt.on_epoch = [&](const EpochLog& e) {
    out << "epoch " << e.epoch << " lr " << e.lr << " loss " << e.loss_total << " mpjpe " << e.mpjpe << " pa_mpjpe "
        << e.pa_mpjpe << " mpve " << e.mpve << '\n'
        << std::flush;
  };
  const auto final_path = with_precision(cfg.model.precision, [&]<typename T>() {
    return train_loop<T>(cfg, ctx, data, opt).final_checkpoint;
  });
  out << "wrote " << final_path << '\n';
  return kExitOk;
}

// eval

template <typename T>
struct LoadedModel {
  RunConfig config;
  ModelContext ctx;
  ModelParams<T> params;
  std::uint64_t epoch = 0;
};

template <typename T>
LoadedModel<T> load_model(const std::string& checkpoint) {
  auto ck = load_checkpoint<T>(checkpoint);
  LoadedModel<T> m{ck.config, build_model_context(ck.config.model), {}, ck.epoch};
  Rng unused(0);
  m.params = ModelParams<T>::make(m.ctx, unused);
  restore_params(m.params, ck.params);
  return m;
}

/// A dataset file (feature rows from 0) or a regenerated split of the run's data.
struct DataSource {
  std::string path;
  std::string split = "test";
};

struct ResolvedData {
  Dataset data;
  std::size_t row_offset = 0;
  std::string label;
};

inline ResolvedData resolve_data(const DataSource& src, const ModelContext& ctx, const RunConfig& cfg) {
  if (!src.path.empty()) return {load_dataset(src.path), 0, src.path};
  if (src.split != "train" && src.split != "test")
    throw ConfigError("--split must be 'train' or 'test', got '" + src.split + "'");
  const bool test = src.split == "test";
  return {generate_split(ctx, cfg, test), feature_row(cfg, test, 0), "generated:" + src.split};
}

inline nlohmann::ordered_json eval_json(const std::string& checkpoint, const DataSource& src, std::size_t workers) {
  const auto bytes = checkpoint_scalar_bytes(checkpoint);
  auto run = [&]<typename T>() {
    auto m = load_model<T>(checkpoint);
    const auto d = resolve_data(src, m.ctx, m.config);
    if (d.data.empty()) throw InputError("eval: dataset '" + d.label + "' is empty");
    check_compatible(m.ctx, d.data);
    const auto r = evaluate(m.ctx, m.params, d.data, d.row_offset, workers);
    nlohmann::ordered_json j;
    j["checkpoint"] = checkpoint;
    j["dataset"] = d.label;
    j["samples"] = d.data.size();
    j["epoch"] = m.epoch;
    j["config_hash"] = config_hash(m.config);
    j["units"] = "template units x 1000";
    j["mpjpe"] = r.mean.mpjpe * kMetricScale;
    j["pa_mpjpe"] = r.mean.pa_mpjpe * kMetricScale;
    j["mpve"] = r.mean.mpve * kMetricScale;
    return j;
  };
  if (bytes == 4) return run.template operator()<float>();
  if (bytes == 8) return run.template operator()<double>();
  throw InputError(checkpoint + ": unsupported scalar width " + std::to_string(bytes));
}

inline int cmd_eval(const std::string& checkpoint, const DataSource& src, const std::string& out_path,
                    std::size_t workers, std::ostream& out) {
  if (checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
  const auto text = eval_json(checkpoint, src, workers).dump(2) + "\n";
  if (out_path.empty()) {
    out << text;
  } else {
    std::ofstream f(out_path, std::ios::binary);
    f << text;
    if (!f) throw InputError("cannot write '" + out_path + "'");
    out << "wrote " << out_path << '\n';
  }
  return kExitOk;
}

// ablate

struct AblationCell {
  bool grid_features = true;
  EncoderSet grb_encoders;
  GrbDesign grb_design = GrbDesign::after;
  GrbKind grb_kind = GrbKind::residual_block;
  std::uint64_t seed = 1;

  /// Cells without graph modules ignore design and kind.
  std::string design_label() const { return grb_encoders.any() ? graphormer::to_string(grb_design) : "-"; }
  std::string kind_label() const { return grb_encoders.any() ? graphormer::to_string(grb_kind) : "-"; }
  bool operator==(const AblationCell& o) const {
    return grid_features == o.grid_features && grb_encoders == o.grb_encoders && seed == o.seed &&
           design_label() == o.design_label() && kind_label() == o.kind_label();
  }

  /// Training seed, a function of the cell's own axis values only.
  std::uint64_t train_seed() const {
    std::uint64_t enc = 0;
    for (std::size_t k = 0; k < 3; ++k) enc |= static_cast<std::uint64_t>(grb_encoders[k]) << k;
    const std::uint64_t design = grb_encoders.any() ? static_cast<std::uint64_t>(grb_design) + 1 : 0;
    const std::uint64_t kind = grb_encoders.any() ? static_cast<std::uint64_t>(grb_kind) + 1 : 0;
    return derive_seed(seed, {grid_features ? 1u : 0u, enc, design, kind});
  }
};

struct AblationPlan {
  std::vector<AblationCell> cells;
  std::size_t cross_product = 0;
};

/// Cross product in axis order (grid, encoders, design, kind, seed), with
/// duplicate no-graph cells merged.
inline AblationPlan plan_ablation(const AblationConfig& a) {
  AblationPlan plan;
  for (const auto& g : a.grid_features)
    for (const auto& e : a.grb_encoders)
      for (const auto& d : a.grb_design)
        for (const auto& k : a.grb_kind)
          for (auto s : a.seeds) {
            ++plan.cross_product;
            AblationCell c{g == "on", EncoderSet::parse(e, "ablation.grb_encoders"),
                           parse_enum<GrbDesign>(d, "ablation.grb_design"), parse_enum<GrbKind>(k, "ablation.grb_kind"),
                           s};
            if (std::find(plan.cells.begin(), plan.cells.end(), c) == plan.cells.end()) plan.cells.push_back(c);
          }
  return plan;
}

inline RunConfig cell_config(RunConfig base, const AblationCell& c) {
  base.model.grid_features = c.grid_features;
  base.model.grb_encoders = c.grb_encoders;
  base.model.grb_design = c.grb_design;
  base.model.grb_kind = c.grb_kind;
  base.train.seed = c.train_seed();
  base.validate();
  return base;
}

struct AblationRow {
  AblationCell cell;
  std::size_t params = 0;
  double final_loss = 0.0;
  PoseMetrics metrics;  // template units x 1000
  std::string status = "ok";
};

inline constexpr const char* kAblationHeader =
    "cell,grid_features,grb_encoders,grb_design,grb_kind,seed,train_seed,params,final_loss,mpjpe,pa_mpjpe,mpve,status";

inline std::string ablation_csv_row(std::size_t index, const AblationRow& r) {
  std::string status = r.status;
  std::replace(status.begin(), status.end(), ',', ';');
  std::replace(status.begin(), status.end(), '\n', ' ');
  return std::to_string(index) + "," + (r.cell.grid_features ? "on" : "off") + "," + r.cell.grb_encoders.str() + "," +
         r.cell.design_label() + "," + r.cell.kind_label() + "," + std::to_string(r.cell.seed) + "," +
         std::to_string(r.cell.train_seed()) + "," + std::to_string(r.params) + "," + format_number(r.final_loss) +
         "," + format_number(r.metrics.mpjpe) + "," + format_number(r.metrics.pa_mpjpe) + "," +
         format_number(r.metrics.mpve) + "," + status;
}

inline std::string render_ablation_table(const std::vector<AblationRow>& rows, const PoseMetrics& baseline) {
  std::ostringstream os;
  os << std::left << std::setw(5) << "cell" << std::setw(6) << "grid" << std::setw(6) << "grb" << std::setw(10)
     << "design" << std::setw(16) << "kind" << std::setw(6) << "seed" << std::right << std::setw(10) << "params"
     << std::setw(12) << "loss" << std::setw(10) << "MPJPE" << std::setw(10) << "PA-MPJPE" << std::setw(10) << "MPVE"
     << "  status\n";
  os << std::fixed;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    os << std::left << std::setw(5) << i << std::setw(6) << (r.cell.grid_features ? "on" : "off") << std::setw(6)
       << r.cell.grb_encoders.str() << std::setw(10) << r.cell.design_label() << std::setw(16) << r.cell.kind_label()
       << std::setw(6) << r.cell.seed << std::right << std::setw(10) << r.params << std::setprecision(5)
       << std::setw(12) << r.final_loss << std::setprecision(2) << std::setw(10) << r.metrics.mpjpe << std::setw(10)
       << r.metrics.pa_mpjpe << std::setw(10) << r.metrics.mpve << "  " << r.status << '\n';
  }
  os << "mean-pose baseline: MPJPE " << std::setprecision(2) << baseline.mpjpe << ", PA-MPJPE " << baseline.pa_mpjpe
     << ", MPVE " << baseline.mpve << " (template units x 1000)\n";
  return os.str();
}

struct AblationResult {
  std::vector<AblationRow> rows;
  PoseMetrics baseline;
};

/// Trains and evaluates every cell on one shared dataset; a failing cell is
/// recorded in its row and the rest still run.
inline AblationResult run_ablation(const RunConfig& base, const std::string& out_dir, std::ostream& out) {
  namespace fs = std::filesystem;
  const auto plan = plan_ablation(base.ablation);
  out << "ablation: " << plan.cells.size() << " cells (cross product " << plan.cross_product
      << ", cells without graph modules merged), " << base.train.epochs << " epochs each\n"
      << std::flush;
  const auto shared_ctx = build_model_context(base.model);
  const auto data = generate_train_data(shared_ctx, base);
  AblationResult result;
  const auto b = mean_pose_baseline(data.train, data.test).mean;
  result.baseline = {b.mpjpe * kMetricScale, b.pa_mpjpe * kMetricScale, b.mpve * kMetricScale};
  if (!out_dir.empty()) fs::create_directories(out_dir);
  for (std::size_t i = 0; i < plan.cells.size(); ++i) {
    AblationRow row{plan.cells[i]};
    try {
      const auto cfg = cell_config(base, row.cell);
      const auto ctx = build_model_context(cfg.model);
      TrainOptions opt;
      if (!out_dir.empty()) opt.out_dir = (fs::path(out_dir) / ("cell" + std::to_string(i))).string();
      opt.debug_checks = debug_checks_enabled();
      with_precision(cfg.model.precision, [&]<typename T>() {
        auto r = train_loop<T>(cfg, ctx, data, opt);
        row.params = count_params(r.params).total;
        if (!r.log.empty()) row.final_loss = r.log.back().loss_total;
        const auto m = evaluate(ctx, r.params, data.test, feature_row(cfg, true, 0), cfg.train.workers).mean;
        row.metrics = {m.mpjpe * kMetricScale, m.pa_mpjpe * kMetricScale, m.mpve * kMetricScale};
      });
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
    }
    out << "cell " << i << ": " << ablation_csv_row(i, row) << '\n' << std::flush;
    result.rows.push_back(std::move(row));
  }
  if (!out_dir.empty()) {
    std::ofstream csv(fs::path(out_dir) / "results.csv");
    csv << "# metrics in template units x 1000; baseline pa_mpjpe " << format_number(result.baseline.pa_mpjpe)
        << '\n'
        << kAblationHeader << '\n';
    for (std::size_t i = 0; i < result.rows.size(); ++i) csv << ablation_csv_row(i, result.rows[i]) << '\n';
    std::ofstream(fs::path(out_dir) / "results.txt") << render_ablation_table(result.rows, result.baseline);
    if (!csv) throw InputError("cannot write ablation results in '" + out_dir + "'");
  }
  return result;
}

inline int cmd_ablate(const RunConfig& cfg, const std::string& out_dir, std::ostream& out) {
  if (out_dir.empty()) throw ConfigError("ablate: --out is required");
  const auto r = run_ablation(cfg, out_dir, out);
  out << render_ablation_table(r.rows, r.baseline);
  return kExitOk;
}

// attn

inline std::vector<std::string> token_names(const TokenLayout& l) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < l.grid; ++i) names.push_back("grid#" + std::to_string(i));
  for (std::size_t i = 0; i < l.joints; ++i) names.push_back("joint#" + std::to_string(i));
  for (std::size_t i = 0; i < l.vertices; ++i) names.push_back("vertex#" + std::to_string(i));
  return names;
}

inline std::size_t token_index(const std::string& name, const TokenLayout& l) {
  const auto names = token_names(l);
  const auto it = std::find(names.begin(), names.end(), name);
  if (it != names.end()) return static_cast<std::size_t>(it - names.begin());
  std::string valid;
  auto range = [&](const char* kind, std::size_t n) {
    if (n == 0) return;
    if (!valid.empty()) valid += ", ";
    valid += std::string(kind) + "#0.." + kind + "#" + std::to_string(n - 1);
  };
  range("grid", l.grid);
  range("joint", l.joints);
  range("vertex", l.vertices);
  throw ConfigError("unknown token '" + name + "' (valid: " + valid + ")");
}

/// Head-averaged attention of the last block of the last encoder, n x n, row-major.
template <typename T>
std::vector<double> averaged_attention(const ModelContext& ctx, const ModelParams<T>& params,
                                       std::span<const double> image, std::size_t feature_row) {
  NoGradGuard no_grad;
  ForwardContext fwd;
  fwd.ln_eps = ctx.config.ln_eps;
  const auto out = model_forward(ctx, params, {image, feature_row}, fwd);
  const auto& heads = out.attention.back().back();
  const std::size_t n = ctx.layout.total();
  std::vector<double> avg(n * n, 0.0);
  for (const auto& h : heads) {
    if (h.size() != n * n) throw ContractError("attention map is not tokens x tokens");
    for (std::size_t i = 0; i < n * n; ++i) avg[i] += static_cast<double>(h[i]);
  }
  for (auto& v : avg) v /= static_cast<double>(heads.size());
  return avg;
}

struct AttnRequest {
  std::string checkpoint;  // empty: fresh initialization from the resolved config
  DataSource data;
  std::size_t sample = 0;
  std::string token;  // empty: map only
  std::string out_dir;
};

struct AttnExport {
  std::size_t tokens = 0;
  std::vector<double> map;
  std::vector<double> row;
};

inline AttnExport export_attention(const RunConfig& fallback, const AttnRequest& req, std::ostream& out) {
  namespace fs = std::filesystem;
  auto run = [&]<typename T>() {
    LoadedModel<T> m;
    if (!req.checkpoint.empty()) {
      m = load_model<T>(req.checkpoint);
    } else {
      m.config = fallback;
      m.ctx = build_model_context(fallback.model);
      Rng rng(derive_seed(fallback.train.seed, {0}));
      m.params = ModelParams<T>::make(m.ctx, rng);
    }
    const auto d = resolve_data(req.data, m.ctx, m.config);
    if (req.sample >= d.data.size())
      throw InputError("sample " + std::to_string(req.sample) + " out of range (dataset has " +
                       std::to_string(d.data.size()) + ")");
    check_compatible(m.ctx, d.data);
    const auto query = req.token.empty() ? std::size_t{0} : token_index(req.token, m.ctx.layout);
    AttnExport e;
    e.tokens = m.ctx.layout.total();
    e.map = averaged_attention(m.ctx, m.params, d.data.samples[req.sample].silhouette, d.row_offset + req.sample);
    if (!req.token.empty()) e.row.assign(e.map.begin() + static_cast<std::ptrdiff_t>(query * e.tokens),
                                         e.map.begin() + static_cast<std::ptrdiff_t>((query + 1) * e.tokens));
    if (debug_checks_enabled())
      for (double v : e.map)
        if (!std::isfinite(v)) throw NumericalError("non-finite attention weight");
    if (!req.out_dir.empty()) {
      fs::create_directories(req.out_dir);
      const auto names = token_names(m.ctx.layout);
      std::ofstream tok(fs::path(req.out_dir) / "tokens.txt");
      for (const auto& n : names) tok << n << '\n';
      std::ofstream map(fs::path(req.out_dir) / "attention_map.csv");
      for (std::size_t i = 0; i < e.tokens; ++i)
        for (std::size_t j = 0; j < e.tokens; ++j)
          map << format_number(e.map[i * e.tokens + j]) << (j + 1 == e.tokens ? '\n' : ',');
      if (!req.token.empty()) {
        std::ofstream row(fs::path(req.out_dir) / "query_row.csv");
        row << "# " << req.token << '\n';
        for (std::size_t j = 0; j < e.tokens; ++j) row << format_number(e.row[j]) << (j + 1 == e.tokens ? '\n' : ',');
      }
      if (!map || !tok) throw InputError("cannot write attention files in '" + req.out_dir + "'");
      out << "wrote " << e.tokens << "x" << e.tokens << " attention map to " << req.out_dir << '\n';
    }
    return e;
  };
  if (!req.checkpoint.empty() && checkpoint_scalar_bytes(req.checkpoint) == 4) return run.template operator()<float>();
  if (req.checkpoint.empty() && fallback.model.precision == Precision::f32) return run.template operator()<float>();
  return run.template operator()<double>();
}

inline int cmd_attn(const RunConfig& fallback, const AttnRequest& req, std::ostream& out) {
  if (req.out_dir.empty()) throw ConfigError("attn: --out is required");
  export_attention(fallback, req, out);
  return kExitOk;
}

// count-params

inline std::string count_params_report(const ModelConfig& m) {
  auto off = m;
  off.grb_encoders = {};
  const auto on_counts = count_params(m), off_counts = count_params(off);
  const auto f_on = flops_estimate(m), f_off = flops_estimate(off);
  std::ostringstream os;
  os << std::left << std::setw(12) << "module" << std::right << std::setw(14) << "parameters" << '\n';
  for (const auto& [name, n] : on_counts.modules) os << std::left << std::setw(12) << name << std::right << std::setw(14) << n << '\n';
  os << std::left << std::setw(12) << "graph" << std::right << std::setw(14) << on_counts.graph
     << "  (inside the encoders)\n";
  os << std::left << std::setw(12) << "total" << std::right << std::setw(14) << on_counts.total << '\n';
  const auto delta = static_cast<long long>(on_counts.total) - static_cast<long long>(off_counts.total);
  os << "without graph modules: " << off_counts.total << " parameters\n";
  os << "graph delta: " << delta << " parameters (" << std::fixed << std::setprecision(4) << delta / 1e6
     << "M), closed form " << graph_delta_closed_form(m) << '\n';
  os << std::setprecision(6) << "forward multiply-adds: " << f_on.total / 1e9 << " G (graph modules " << f_on.graph / 1e9
     << " G)\n";
  os << "without graph modules: " << f_off.total / 1e9 << " G; delta " << (f_on.total - f_off.total) / 1e9 << " G ("
     << std::setprecision(4) << 100.0 * (f_on.total - f_off.total) / f_off.total << "%)\n";
  return os.str();
}

inline int cmd_count_params(const RunConfig& cfg, std::ostream& out) {
  out << count_params_report(cfg.model);
  return kExitOk;
}

// gen-data

inline int cmd_gen_data(const RunConfig& cfg, const std::string& split, const std::string& out_path,
                        std::ostream& out) {
  if (out_path.empty()) throw ConfigError("gen-data: --out is required");
  if (split != "train" && split != "test") throw ConfigError("--split must be 'train' or 'test', got '" + split + "'");
  const auto ctx = build_model_context(cfg.model, false);
  const auto d = generate_split(ctx, cfg, split == "test");
  save_dataset(out_path, d);
  out << "wrote " << d.size() << " " << split << " samples to " << out_path << '\n';
  return kExitOk;
}

}  // namespace graphormer::cli
