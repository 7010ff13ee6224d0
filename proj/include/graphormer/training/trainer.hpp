// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "graphormer/parallel.hpp"
#include "graphormer/training/checkpoint.hpp"
#include "graphormer/training/losses.hpp"
#include "graphormer/training/mask.hpp"
#include "graphormer/training/metrics.hpp"

namespace graphormer {

struct TrainData {
  Dataset train, test;
};

inline DatasetOptions dataset_options(const RunConfig& c, std::size_t workers) {
  return {c.data.angle_range, c.model.image_size, c.model.image_size, c.data.sigma_px, workers};
}

/// One split; train and test draw from independent streams of data.seed.
inline Dataset generate_split(const ModelContext& ctx, const RunConfig& c, bool test_split) {
  return generate_dataset(ctx.mesh, test_split ? c.data.test_samples : c.data.train_samples,
                          derive_seed(c.data.seed, {test_split ? 1u : 0u}), dataset_options(c, c.train.workers));
}

inline TrainData generate_train_data(const ModelContext& ctx, const RunConfig& c) {
  return {generate_split(ctx, c, false), generate_split(ctx, c, true)};
}

/// Precomputed feature rows: training samples first, then test samples.
inline std::size_t feature_row(const RunConfig& c, bool test_split, std::size_t index) {
  return test_split ? c.data.train_samples + index : index;
}

/// Checks a dataset against the model's image size and mesh sizes.
inline void check_compatible(const ModelContext& ctx, const Dataset& d) {
  auto require = [](std::size_t got, std::size_t want, const char* what) {
    if (got != want)
      throw ConfigError(std::string("dataset ") + what + " is " + std::to_string(got) + " but the model expects " +
                        std::to_string(want));
  };
  require(d.joints, ctx.mesh.num_joints(), "joint count");
  require(d.coarse_vertices, ctx.layout.vertices, "coarse vertex count");
  require(d.fine_vertices, ctx.mesh.num_vertices(), "fine vertex count");
  if (ctx.config.feature_source == FeatureSource::conv) {
    require(d.height, ctx.config.image_size, "image height");
    require(d.width, ctx.config.image_size, "image width");
  }
}

struct EvalResult {
  PoseMetrics mean;
  std::vector<PoseMetrics> per_sample;
};

/// Evaluation-mode metrics over a dataset, averaged in sample order.
template <typename T>
EvalResult evaluate(const ModelContext& ctx, const ModelParams<T>& params, const Dataset& data, std::size_t row_offset,
                    std::size_t workers) {
  EvalResult r;
  r.per_sample.resize(data.size());
  ForwardContext fwd;
  fwd.ln_eps = ctx.config.ln_eps;
  parallel_for(data.size(), workers, [&](std::size_t i, std::size_t) {
    NoGradGuard no_grad;
    const auto& s = data.samples[i];
    auto out = model_forward(ctx, params, {s.silhouette, row_offset + i}, fwd);
    auto to_d = [](const Tensor<T>& t) { return std::vector<double>(t.values().begin(), t.values().end()); };
    r.per_sample[i] = pose_metrics(to_d(out.joints3d), s.joints3d, to_d(out.fine_vertices), s.fine_vertices);
  });
  for (const auto& m : r.per_sample) {
    r.mean.mpjpe += m.mpjpe;
    r.mean.pa_mpjpe += m.pa_mpjpe;
    r.mean.mpve += m.mpve;
  }
  const double n = static_cast<double>(data.size());
  r.mean.mpjpe /= n;
  r.mean.pa_mpjpe /= n;
  r.mean.mpve /= n;
  return r;
}

/// Metrics of predicting the training set's mean pose for every test sample.
inline EvalResult mean_pose_baseline(const Dataset& train, const Dataset& test) {
  const auto mean = mean_sample(train);
  EvalResult r;
  for (const auto& s : test.samples) {
    r.per_sample.push_back(pose_metrics(mean.joints3d, s.joints3d, mean.fine_vertices, s.fine_vertices));
    r.mean.mpjpe += r.per_sample.back().mpjpe;
    r.mean.pa_mpjpe += r.per_sample.back().pa_mpjpe;
    r.mean.mpve += r.per_sample.back().mpve;
  }
  const double n = static_cast<double>(test.size());
  r.mean.mpjpe /= n;
  r.mean.pa_mpjpe /= n;
  r.mean.mpve /= n;
  return r;
}

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double loss_total = 0.0, loss_vf = 0.0, loss_vc = 0.0, loss_j3 = 0.0, loss_j2 = 0.0;
  double mpjpe = 0.0, pa_mpjpe = 0.0, mpve = 0.0;  // template units x 1000
  double wall_seconds = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "epoch,lr,loss_total,loss_vf,loss_vc,loss_j3,loss_j2,mpjpe,pa_mpjpe,mpve,wall_seconds";

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_row(const EpochLog& e) {
  std::string s = std::to_string(e.epoch);
  for (double v : {e.lr, e.loss_total, e.loss_vf, e.loss_vc, e.loss_j3, e.loss_j2, e.mpjpe, e.pa_mpjpe, e.mpve,
                   e.wall_seconds})
    s += "," + format_number(v);
  return s;
}

struct TrainOptions {
  /// Directory for metrics.csv, config.resolved and checkpoints; empty writes nothing.
  std::string out_dir;
  /// false skips mask sampling entirely (reference path for the ratio_max = 0 check).
  bool masking = true;
  std::function<void(const EpochLog&)> on_epoch;
  /// Checks every parameter for non-finite values after each optimizer step.
  bool debug_checks = false;
};

template <typename T>
struct TrainResult {
  ModelParams<T> params;
  AdamState<T> adam;
  std::vector<EpochLog> log;
  std::uint64_t step = 0;
  std::string final_checkpoint;
};

template <typename T>
Checkpoint<T> make_checkpoint(const RunConfig& c, ModelParams<T>& params, const AdamState<T>& adam,
                              std::uint64_t epoch, std::uint64_t step) {
  return {c, epoch, step, Rng(derive_seed(c.train.seed, {1, epoch})).state(), snapshot_params(params), adam};
}

/// Independent copy of every parameter value (fresh autodiff nodes).
template <typename T>
ModelParams<T> clone_parameters(const ModelContext& ctx, ModelParams<T>& p) {
  Rng unused(0);
  auto copy = ModelParams<T>::make(ctx, unused);
  restore_params(copy, snapshot_params(p));
  return copy;
}

template <typename T>
std::vector<Tensor<T>> parameter_list(ModelParams<T>& p) {
  std::vector<Tensor<T>> out;
  p.visit(std::string{}, [&](const std::string&, Tensor<T>& t) { out.push_back(t); });
  return out;
}

/// Seeded shuffle, per-batch mask plan, per-sample forward/backward with
/// gradients summed in sample order (so any worker count gives the same
/// result), Adam with the step schedule, held-out evaluation every epoch.
template <typename T>
TrainResult<T> train_loop(const RunConfig& cfg, const ModelContext& ctx, const TrainData& data,
                          const TrainOptions& opt = {}) {
  cfg.validate();
  if (data.train.empty()) throw InputError("train_loop: empty training set");
  check_compatible(ctx, data.train);
  if (!data.test.empty()) check_compatible(ctx, data.test);
  const auto& tc = cfg.train;
  const std::size_t workers = std::max<std::size_t>(1, tc.workers);
  const auto weights = LossWeights::from(tc);
  const auto clock_start = std::chrono::steady_clock::now();

  TrainResult<T> r;
  Rng init_rng(derive_seed(tc.seed, {0}));
  r.params = ModelParams<T>::make(ctx, init_rng);
  auto params = parameter_list(r.params);
  r.adam = make_adam_state(params);

  std::ofstream csv;
  std::string last_good;
  namespace fs = std::filesystem;
  auto checkpoint_path = [&](std::size_t epoch) {
    return (fs::path(opt.out_dir) / ("checkpoint_epoch" + std::to_string(epoch) + ".bin")).string();
  };
  if (!opt.out_dir.empty()) {
    fs::create_directories(opt.out_dir);
    std::ofstream resolved(fs::path(opt.out_dir) / "config.resolved");
    resolved << render_config(cfg);
    if (!resolved) throw InputError("cannot write resolved config in '" + opt.out_dir + "'");
    csv.open(fs::path(opt.out_dir) / "metrics.csv");
    if (!csv) throw InputError("cannot write metrics.csv in '" + opt.out_dir + "'");
    csv << "# losses in template units; mpjpe, pa_mpjpe, mpve in template units x 1000 (mm-equivalent); "
        << "reproducible: yes (per-sample gradients summed in sample order); config " << config_hash(cfg) << '\n'
        << kMetricsHeader << '\n';
    csv.flush();
    last_good = checkpoint_path(0);
    save_checkpoint(last_good, make_checkpoint(cfg, r.params, r.adam, 0, 0));
  }

  const std::size_t n = data.train.size();
  const std::size_t batch = std::min(tc.batch_size, n);
  std::vector<std::vector<T>> acc(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) acc[i].assign(params[i].size(), T(0));

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, tc.lr, tc.lr_drop_epoch, tc.lr_drop_factor);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle(derive_seed(tc.seed, {1, epoch}));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    EpochLog log;
    log.epoch = epoch + 1;
    log.lr = lr;
    for (std::size_t start = 0, b = 0; start < n; start += batch, ++b) {
      const std::size_t count = std::min(batch, n - start);
      MaskPlan plan;
      if (opt.masking) {
        Rng mask_rng(derive_seed(tc.seed, {2, epoch, b}));
        plan = sample_mask_plan(tc.mask_ratio_max, ctx.layout.queries(), mask_rng);
      }
      for (auto& a : acc) std::fill(a.begin(), a.end(), T(0));
      std::vector<LossTerms<T>> terms(count);
      std::vector<std::vector<std::vector<T>>> slots(workers > 1 ? count : 0);
      std::vector<ModelParams<T>> clones;
      std::vector<std::vector<Tensor<T>>> clone_lists;
      for (std::size_t w = 0; w < (workers > 1 ? std::min(workers, count) : 0); ++w) {
        clones.push_back(clone_parameters(ctx, r.params));
        clone_lists.push_back(parameter_list(clones.back()));
      }
      auto run_sample = [&](std::size_t k, ModelParams<T>& p, std::vector<Tensor<T>>& list) {
        const std::size_t idx = order[start + k];
        const auto& s = data.train.samples[idx];
        for (auto& t : list) t.zero_grad();
        Rng drop(derive_seed(tc.seed, {3, epoch, start + k}));
        ForwardContext fwd{true, cfg.model.dropout, cfg.model.ln_eps, &drop, false};
        auto out = model_forward(ctx, p, {s.silhouette, feature_row(cfg, false, idx)}, fwd, &plan);
        terms[k] = compute_losses(out, make_targets<T>(s), weights);
        if (!std::isfinite(static_cast<double>(terms[k].total.item())))
          throw NumericalError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", sample " +
                               std::to_string(idx) +
                               (last_good.empty() ? std::string() : "; last good checkpoint: " + last_good));
        backward(terms[k].total);
      };
      if (workers == 1) {
        for (std::size_t k = 0; k < count; ++k) {
          run_sample(k, r.params, params);
          for (std::size_t i = 0; i < params.size(); ++i) {
            const auto g = params[i].grad();
            for (std::size_t j = 0; j < g.size(); ++j) acc[i][j] += g[j];
          }
        }
      } else {
        parallel_for(count, workers, [&](std::size_t k, std::size_t w) {
          run_sample(k, clones[w], clone_lists[w]);
          slots[k].resize(params.size());
          for (std::size_t i = 0; i < params.size(); ++i) slots[k][i] = clone_lists[w][i].grad();
        });
        for (std::size_t k = 0; k < count; ++k)
          for (std::size_t i = 0; i < params.size(); ++i)
            for (std::size_t j = 0; j < acc[i].size(); ++j) acc[i][j] += slots[k][i][j];
      }
      const T inv = T(1) / static_cast<T>(count);
      for (auto& a : acc)
        for (auto& x : a) x *= inv;
      clip_gradients(acc, tc.grad_clip);
      adam_step(params, acc, r.adam, lr);
      ++r.step;
      if (opt.debug_checks) {
        r.params.visit(std::string{}, [&](const std::string& name, Tensor<T>& t) {
          for (T v : t.values())
            if (!std::isfinite(static_cast<double>(v)))
              throw NumericalError("non-finite value in parameter '" + name + "' after step " +
                                   std::to_string(r.step) +
                                   (last_good.empty() ? std::string() : "; last good checkpoint: " + last_good));
        });
      }
      for (const auto& t : terms) {
        log.loss_total += static_cast<double>(t.total.item());
        log.loss_vf += t.vertex_fine;
        log.loss_vc += t.vertex_coarse;
        log.loss_j3 += t.joint3d;
        log.loss_j2 += t.joint2d;
      }
    }
    for (auto* v : {&log.loss_total, &log.loss_vf, &log.loss_vc, &log.loss_j3, &log.loss_j2})
      *v /= static_cast<double>(n);
    for (auto& t : params) t.zero_grad();
    if (!data.test.empty()) {
      const auto eval = evaluate(ctx, r.params, data.test, feature_row(cfg, true, 0), workers);
      log.mpjpe = eval.mean.mpjpe * kMetricScale;
      log.pa_mpjpe = eval.mean.pa_mpjpe * kMetricScale;
      log.mpve = eval.mean.mpve * kMetricScale;
    }
    if (tc.record_wall_time)
      log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
    r.log.push_back(log);
    if (csv.is_open()) {
      csv << csv_row(log) << '\n';
      csv.flush();
    }
    if (opt.on_epoch) opt.on_epoch(log);
    if (!opt.out_dir.empty() && tc.checkpoint_every > 0 && (epoch + 1) % tc.checkpoint_every == 0) {
      last_good = checkpoint_path(epoch + 1);
      save_checkpoint(last_good, make_checkpoint(cfg, r.params, r.adam, epoch + 1, r.step));
    }
  }
  if (!opt.out_dir.empty()) {
    r.final_checkpoint = (fs::path(opt.out_dir) / "checkpoint.bin").string();
    save_checkpoint(r.final_checkpoint, make_checkpoint(cfg, r.params, r.adam, tc.epochs, r.step));
  }
  return r;
}

}  // namespace graphormer
