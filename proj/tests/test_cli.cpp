// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "graphormer/cli/commands.hpp"

using namespace graphormer;
using namespace graphormer::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("graphormer_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunOutput {
  int code = -1;
  std::string text;  // stdout and stderr
};

RunOutput run_cli(const std::string& args) {
  const auto log = fs::temp_directory_path() / "graphormer_cli_last_output.txt";
  const auto cmd = std::string(GRAPHORMER_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

/// Tiny run used by the command tests.
CommonOptions tiny_options(std::size_t epochs = 2) {
  CommonOptions o;
  o.overrides = {"data.train_samples=8", "data.test_samples=4", "train.batch_size=4",
                 "train.epochs=" + std::to_string(epochs), "train.record_wall_time=false"};
  return o;
}

std::string last_data_row(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  return last;
}

double csv_field(const std::string& row, std::size_t index) {
  std::stringstream ss(row);
  std::string cell;
  for (std::size_t i = 0; i <= index; ++i) std::getline(ss, cell, ',');
  return std::stod(cell);
}

}  // namespace

TEST(Config, ResolutionOrderIsPresetFileOverridesFlags) {
  const auto dir = scratch_dir("resolve");
  std::ofstream(dir / "run.cfg") << "train.epochs = 5\ntrain.seed = 9\n";
  CommonOptions o;
  o.config_path = (dir / "run.cfg").string();
  o.overrides = {"train.epochs=7"};
  o.seed = 11;
  o.workers = 2;
  const auto c = resolve_config(o);
  EXPECT_EQ(c.train.epochs, 7u);
  EXPECT_EQ(c.train.seed, 11u);
  EXPECT_EQ(c.train.workers, 2u);
  o.preset = "paper-faithful";
  EXPECT_EQ(resolve_config(o).model.hidden_dims, paper_faithful_preset().model.hidden_dims);
}

TEST(Config, ErrorsNameTheKeyOrPath) {
  CommonOptions o;
  o.overrides = {"train.nonsense=1"};
  try {
    resolve_config(o);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.nonsense"), std::string::npos);
  }
  CommonOptions missing;
  missing.config_path = "/nonexistent/run.cfg";
  try {
    resolve_config(missing);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/run.cfg"), std::string::npos);
  }
}

TEST(Cli, ExitCodesFollowTheContract) {
  auto missing = run_cli("train --config /nonexistent/run.cfg --out /tmp/graphormer_cli_unused");
  EXPECT_EQ(missing.code, kExitConfig);
  EXPECT_NE(missing.text.find("/nonexistent/run.cfg"), std::string::npos);

  auto bad_key = run_cli("count-params --set model.bogus=3");
  EXPECT_EQ(bad_key.code, kExitConfig);
  EXPECT_NE(bad_key.text.find("model.bogus"), std::string::npos);

  EXPECT_EQ(run_cli("no-such-command").code, kExitConfig);
  EXPECT_EQ(run_cli("--help").code, kExitOk);

  auto count = run_cli("count-params");
  EXPECT_EQ(count.code, kExitOk);
  EXPECT_NE(count.text.find("graph delta: " + std::to_string(graph_delta_closed_form(ModelConfig{}))),
            std::string::npos)
      << count.text;
}

TEST(Cli, NumericalFailureExitsWithThree) {
  const auto dir = scratch_dir("nan");
  auto r = run_cli("train --out " + dir.string() +
                   " --set data.train_samples=4 --set data.test_samples=2 --set train.batch_size=2"
                   " --set train.epochs=3 --set train.lr=1e300");
  EXPECT_EQ(r.code, kExitNumerical) << r.text;
  EXPECT_NE(r.text.find("checkpoint_epoch0.bin"), std::string::npos) << r.text;
}

TEST(Cli, ZeroEpochTrainWritesHeaderOnlyLogAndInitialCheckpoint) {
  const auto dir = scratch_dir("zero");
  std::ostringstream out;
  ASSERT_EQ(cmd_train(resolve_config(tiny_options(0)), dir.string(), out), kExitOk);
  std::ifstream csv(dir / "metrics.csv");
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(csv, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[1], kMetricsHeader);
  EXPECT_TRUE(fs::exists(dir / "checkpoint_epoch0.bin"));
  EXPECT_TRUE(fs::exists(dir / "checkpoint.bin"));
  EXPECT_EQ(parse_config(slurp(dir / "config.resolved")), resolve_config(tiny_options(0)));
}

TEST(Cli, EvalMatchesLastLogRowAndIsByteIdentical) {
  const auto dir = scratch_dir("eval");
  std::ostringstream out;
  ASSERT_EQ(cmd_train(resolve_config(tiny_options()), dir.string(), out), kExitOk);
  const auto ckpt = (dir / "checkpoint.bin").string();
  ASSERT_EQ(cmd_eval(ckpt, {}, (dir / "a.json").string(), 1, out), kExitOk);
  ASSERT_EQ(cmd_eval(ckpt, {}, (dir / "b.json").string(), 3, out), kExitOk);
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
  const auto j = nlohmann::json::parse(slurp(dir / "a.json"));
  const auto row = last_data_row(dir / "metrics.csv");
  EXPECT_NEAR(j["mpjpe"].get<double>(), csv_field(row, 7), 1e-9);
  EXPECT_NEAR(j["pa_mpjpe"].get<double>(), csv_field(row, 8), 1e-9);
  EXPECT_NEAR(j["mpve"].get<double>(), csv_field(row, 9), 1e-9);
  EXPECT_EQ(j["samples"].get<std::size_t>(), 4u);
  EXPECT_EQ(j["config_hash"].get<std::string>(), config_hash(resolve_config(tiny_options())));
}

TEST(Cli, EvalRejectsEmptyAndMismatchedDatasets) {
  const auto dir = scratch_dir("eval_bad");
  std::ostringstream out;
  ASSERT_EQ(cmd_train(resolve_config(tiny_options(0)), dir.string(), out), kExitOk);
  const auto ckpt = (dir / "checkpoint.bin").string();

  Dataset empty{8, 192, 48, 56, 56, {}};
  save_dataset((dir / "empty.bin").string(), empty);
  EXPECT_EQ(run_cli("eval --checkpoint " + ckpt + " --data " + (dir / "empty.bin").string()).code, kExitConfig);

  auto other = tiny_options();
  other.overrides.push_back("model.coarse_vertices=40");
  ASSERT_EQ(cmd_gen_data(resolve_config(other), "test", (dir / "other.bin").string(), out), kExitOk);
  auto r = run_cli("eval --checkpoint " + ckpt + " --data " + (dir / "other.bin").string());
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.text.find("40"), std::string::npos) << r.text;
  EXPECT_NE(r.text.find("48"), std::string::npos) << r.text;

  ASSERT_EQ(cmd_gen_data(resolve_config(tiny_options()), "test", (dir / "same.bin").string(), out), kExitOk);
  const auto from_file = eval_json(ckpt, {(dir / "same.bin").string()}, 1);
  const auto regenerated = eval_json(ckpt, {}, 1);
  // Dataset files store float32, so metrics agree to float precision only.
  for (const char* key : {"mpjpe", "pa_mpjpe", "mpve"})
    EXPECT_NEAR(from_file[key].get<double>(), regenerated[key].get<double>(),
                1e-6 * regenerated[key].get<double>())
        << key;
}

TEST(Ablation, DefaultSpecHasSixCellsAfterMerging) {
  const auto plan = plan_ablation(AblationConfig{});
  EXPECT_EQ(plan.cross_product, 8u);
  ASSERT_EQ(plan.cells.size(), 6u);
  EXPECT_EQ(plan.cells[0].kind_label(), "-");
  EXPECT_EQ(plan.cells[1].kind_label(), "basic_conv");
  EXPECT_EQ(plan.cells[2].kind_label(), "residual_block");
  EXPECT_FALSE(plan.cells[3].grid_features);
  std::set<std::uint64_t> seeds;
  for (const auto& c : plan.cells) seeds.insert(c.train_seed());
  EXPECT_EQ(seeds.size(), 6u);
}

TEST(Ablation, SingleCellEqualsTrainThenEval) {
  auto opts = tiny_options();
  opts.overrides.insert(opts.overrides.end(), {"ablation.grid_features=on", "ablation.grb_encoders=3",
                                              "ablation.grb_design=after", "ablation.grb_kind=residual_block",
                                              "ablation.seeds=5"});
  const auto cfg = resolve_config(opts);
  const auto dir = scratch_dir("single");
  std::ostringstream out;
  const auto result = run_ablation(cfg, (dir / "ablate").string(), out);
  ASSERT_EQ(result.rows.size(), 1u);
  ASSERT_EQ(result.rows[0].status, "ok");

  opts.seed = result.rows[0].cell.train_seed();
  ASSERT_EQ(cmd_train(resolve_config(opts), (dir / "train").string(), out), kExitOk);
  const auto j = eval_json((dir / "train" / "checkpoint.bin").string(), {}, 1);
  EXPECT_EQ(j["pa_mpjpe"].get<double>(), result.rows[0].metrics.pa_mpjpe);
  EXPECT_EQ(j["mpjpe"].get<double>(), result.rows[0].metrics.mpjpe);
  EXPECT_TRUE(fs::exists(dir / "ablate" / "results.csv"));
  EXPECT_TRUE(fs::exists(dir / "ablate" / "results.txt"));
}

TEST(Ablation, FailingCellIsRecordedAndOthersRun) {
  auto opts = tiny_options(1);
  opts.overrides.insert(opts.overrides.end(), {"model.grb_encoders=none", "model.hidden_dims=64,32,15",
                                              "model.heads=1", "ablation.grid_features=on",
                                              "ablation.grb_encoders=none,3", "ablation.grb_kind=residual_block"});
  const auto cfg = resolve_config(opts);
  std::ostringstream out;
  const auto result = run_ablation(cfg, scratch_dir("failing").string(), out);
  ASSERT_EQ(result.rows.size(), 2u);
  EXPECT_EQ(result.rows[0].status, "ok");
  EXPECT_EQ(result.rows[1].status.rfind("failed", 0), 0u);
  EXPECT_TRUE(std::isfinite(result.rows[0].metrics.pa_mpjpe));
}

TEST(Attn, RowsSumToOneAndExportIsDeterministic) {
  const auto cfg = resolve_config(tiny_options());
  const auto dir = scratch_dir("attn");
  std::ostringstream out;
  AttnRequest req{"", {}, 1, "joint#0", (dir / "a").string()};
  const auto e = export_attention(cfg, req, out);
  const std::size_t n = build_model_context(cfg.model, false).layout.total();
  ASSERT_EQ(e.tokens, n);
  ASSERT_EQ(e.map.size(), n * n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += e.map[i * n + j];
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  const std::size_t joint0 = cfg.model.grid_tokens();
  for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(e.row[j], e.map[joint0 * n + j]);
  req.out_dir = (dir / "b").string();
  export_attention(cfg, req, out);
  for (const char* f : {"attention_map.csv", "query_row.csv", "tokens.txt"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
}

TEST(Attn, UnknownTokenListsValidNames) {
  auto r = run_cli("attn --token elbow --out " + scratch_dir("attn_bad").string());
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.text.find("grid#0..grid#48"), std::string::npos) << r.text;
  EXPECT_NE(r.text.find("joint#0..joint#7"), std::string::npos) << r.text;
  EXPECT_NE(r.text.find("vertex#0..vertex#47"), std::string::npos) << r.text;
}

TEST(Attn, CheckpointExportUsesTrainedWeights) {
  const auto dir = scratch_dir("attn_ckpt");
  std::ostringstream out;
  const auto cfg = resolve_config(tiny_options(1));
  ASSERT_EQ(cmd_train(cfg, (dir / "run").string(), out), kExitOk);
  const auto fresh = export_attention(cfg, {"", {}, 0, "", ""}, out);
  const auto trained = export_attention(cfg, {(dir / "run" / "checkpoint.bin").string(), {}, 0, "", ""}, out);
  EXPECT_NE(fresh.map, trained.map);
}
