// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <iostream>

#include "graphormer/cli/commands.hpp"

using namespace graphormer;
using namespace graphormer::cli;

namespace {

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--preset", o.preset, "Base configuration")->check(CLI::IsMember({"desk", "paper-faithful"}));
  sub->add_option("--config", o.config_path, "Config file applied on top of the preset");
  sub->add_option("--set", o.overrides, "Override a config key (key=value), repeatable");
  sub->add_option("--seed", o.seed, "Training seed (train.seed)");
  sub->add_option("--workers", o.workers, "Worker threads (train.workers)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-convolution-reinforced transformer for mesh regression"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string out, checkpoint, token, split = "test", data_path;
  std::size_t sample = 0;

  auto* train = app.add_subcommand("train", "Train a model and write logs and checkpoints");
  add_common(train, common);
  train->add_option("--out", out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint, writing metrics JSON");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", data_path, "Dataset file from gen-data (default: regenerate --split)");
  eval->add_option("--split", split, "Split to regenerate from the checkpoint config (train or test)");
  eval->add_option("--out", out, "JSON output path (default: stdout)");

  auto* ablate = app.add_subcommand("ablate", "Run the ablation matrix from the ablation.* keys");
  add_common(ablate, common);
  ablate->add_option("--out", out, "Output directory")->required();

  auto* attn = app.add_subcommand("attn", "Export the head-averaged attention map of the last layer");
  add_common(attn, common);
  attn->add_option("--checkpoint", checkpoint, "Checkpoint file (default: fresh initialization)");
  attn->add_option("--data", data_path, "Dataset file from gen-data (default: regenerate --split)");
  attn->add_option("--split", split, "Split to regenerate (train or test)");
  attn->add_option("--sample", sample, "Sample index");
  attn->add_option("--token", token, "Query token for the row export, e.g. joint#0");
  attn->add_option("--out", out, "Output directory")->required();

  auto* count = app.add_subcommand("count-params", "Per-module parameter and FLOP accounting");
  add_common(count, common);

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset split");
  add_common(gen, common);
  gen->add_option("--split", split, "train or test");
  gen->add_option("--out", out, "Dataset file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  return guarded(std::cerr, [&] {
    const auto cfg = resolve_config(common);
    const std::size_t workers = cfg.train.workers;
    const DataSource source{data_path, split};
    if (train->parsed()) return cmd_train(cfg, out, std::cout);
    if (eval->parsed()) return cmd_eval(checkpoint, source, out, workers, std::cout);
    if (ablate->parsed()) return cmd_ablate(cfg, out, std::cout);
    if (attn->parsed()) return cmd_attn(cfg, {checkpoint, source, sample, token, out}, std::cout);
    if (count->parsed()) return cmd_count_params(cfg, std::cout);
    return cmd_gen_data(cfg, split, out, std::cout);
  });
}
