#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "surgseg/cli.hpp"
#include "surgseg/errors.hpp"
#include "surgseg/evaluator.hpp"
#include "surgseg/experiment.hpp"
#include "surgseg/fileutil.hpp"
#include "surgseg/image_io.hpp"
#include "surgseg/manifest.hpp"
#include "test_util.hpp"

namespace surgseg {
namespace {

namespace fs = std::filesystem;

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "surgseg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

void write(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

const std::vector<std::string> kTinyModel{"--height", "16",   "--width",      "16", "--depth", "1", "--base-channels",
                                          "4",        "--iters", "2",         "--batch-size", "2"};

std::vector<std::string> with_tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTinyModel.begin(), kTinyModel.end());
  return args;
}

TEST(ExitCodes, MapErrorKinds) {
  EXPECT_EQ(exit_code_for(ConfigError("x")), kExitConfig);
  EXPECT_EQ(exit_code_for(DataError("x")), kExitData);
  EXPECT_EQ(exit_code_for(ParseError("x", 3)), kExitData);
  EXPECT_EQ(exit_code_for(ShapeError("x")), kExitRuntime);
  EXPECT_EQ(exit_code_for(TrainingError("x")), kExitRuntime);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), kExitRuntime);
}

TEST(ExitCodes, UsageErrors) {
  EXPECT_EQ(cli({"--help"}), kExitOk);
  EXPECT_EQ(cli({}), kExitConfig);
  EXPECT_EQ(cli({"frobnicate"}), kExitConfig);
  EXPECT_EQ(cli({"train", "--out", "x.ckpt"}), kExitConfig);
}

class CliPipeline : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = dir_.path().string();
    ASSERT_EQ(cli({"--seed", "3", "generate-synthetic", "--out", dir_.file("syn"), "--classes", "2", "--per-class", "3",
                   "--height", "32", "--width", "32"}),
              kExitOk);
    ASSERT_EQ(cli({"ingest", "--annotations", dir_.file("syn/annotations.json"), "--images", dir_.file("syn/images"),
                   "--taxonomy", dir_.file("syn/taxonomy.txt"), "--out", manifest()}),
              kExitOk);
  }

  std::string manifest() const { return dir_.file("manifest.tsv"); }

  std::string trained_checkpoint() {
    const std::string ckpt = dir_.file("model.ckpt");
    if (!fs::exists(ckpt)) {
      EXPECT_EQ(cli(with_tiny({"--seed", "5", "train", "--manifest", manifest(), "--out", ckpt})), kExitOk);
    }
    return ckpt;
  }

  test::TempDir dir_;
  std::string root_;
};

TEST_F(CliPipeline, IngestWritesEveryImageWithItsClass) {
  const Dataset ds = read_manifest(manifest());
  EXPECT_EQ(ds.images.size(), 6u);
  EXPECT_EQ(class_counts(ds.images, ds.taxonomy), (std::vector<int>{3, 3}));
  EXPECT_TRUE(fs::path(ds.images[0].path).is_absolute());
}

TEST_F(CliPipeline, EmptyAnnotationFileFails) {
  write(dir_.file("empty.json"), "");
  const int rc = cli({"ingest", "--annotations", dir_.file("empty.json"), "--images", dir_.file("syn/images"), "--out",
                      dir_.file("never.tsv")});
  EXPECT_NE(rc, kExitOk);
  EXPECT_FALSE(fs::exists(dir_.file("never.tsv")));
}

TEST_F(CliPipeline, TrainWritesCheckpointAndLossCurve) {
  const std::string ckpt = trained_checkpoint();
  EXPECT_TRUE(fs::exists(ckpt));
  const std::string curve = read_text_file(ckpt + ".loss.tsv");
  EXPECT_EQ(curve.rfind("0\t", 0), 0u);
  EXPECT_NE(curve.find("\n1\t"), std::string::npos);
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 2);
}

TEST_F(CliPipeline, EvalRecordsFeedTheReportCommand) {
  const std::string ckpt = trained_checkpoint();
  ASSERT_EQ(cli({"eval", "--manifest", manifest(), "--checkpoint", ckpt, "--tau", "0.4", "--out", dir_.file("r.tsv")}),
            kExitOk);
  ASSERT_EQ(cli({"report", "--records", dir_.file("r.tsv"), "--manifest", manifest(), "--format", "csv", "--out",
                 dir_.file("table.csv")}),
            kExitOk);
  const Dataset ds = read_manifest(manifest());
  double tau = 0;
  const auto records = parse_records(read_text_file(dir_.file("r.tsv")), ds.taxonomy, &tau);
  EXPECT_EQ(records.size(), 6u);
  EXPECT_EQ(tau, 0.4);
  const auto expected = emit_report(aggregate_reports(records, ds.taxonomy, 1), ReportFormat::kCsv, tau);
  EXPECT_EQ(read_text_file(dir_.file("table.csv")), expected);
}

TEST_F(CliPipeline, OutOfRangeTauCreatesNoRunDirectory) {
  const std::string run = dir_.file("run");
  EXPECT_EQ(cli(with_tiny({"crossval", "--manifest", manifest(), "--run-dir", run, "--tau", "1.5", "--folds", "3"})),
            kExitConfig);
  EXPECT_FALSE(fs::exists(run));
  EXPECT_EQ(cli(with_tiny({"crossval", "--manifest", manifest(), "--run-dir", run, "--folds", "7"})), kExitConfig);
  EXPECT_FALSE(fs::exists(run));
}

TEST_F(CliPipeline, CrossvalWritesReloadableConfig) {
  const std::string run = dir_.file("run");
  ASSERT_EQ(cli(with_tiny({"--seed", "11", "crossval", "--manifest", manifest(), "--run-dir", run, "--folds", "3"})),
            kExitOk);
  for (const char* f : {"config.toml", "records.tsv", "report.csv", "report.md"}) {
    EXPECT_TRUE(fs::exists(fs::path(run) / f)) << f;
  }
  // Replaying the snapshot reproduces the records.
  const std::string again = dir_.file("again");
  std::string config = read_text_file((fs::path(run) / "config.toml").string());
  config.replace(config.find(run), run.size(), again);
  write(dir_.file("replay.toml"), config);
  ASSERT_EQ(cli({"--config", dir_.file("replay.toml"), "crossval"}), kExitOk);
  EXPECT_EQ(read_text_file((fs::path(run) / "records.tsv").string()),
            read_text_file((fs::path(again) / "records.tsv").string()));
}

TEST_F(CliPipeline, FlagsOverrideConfigFile) {
  write(dir_.file("bad.toml"), "[train]\niters = 0\n");
  const std::vector<std::string> base{"--config", dir_.file("bad.toml"), "train", "--manifest", manifest(), "--out",
                                      dir_.file("c.ckpt")};
  std::vector<std::string> model{"--height", "16", "--width", "16", "--depth", "1", "--base-channels", "4"};
  std::vector<std::string> args = base;
  args.insert(args.end(), model.begin(), model.end());
  EXPECT_EQ(cli(args), kExitConfig);
  EXPECT_FALSE(fs::exists(dir_.file("c.ckpt")));
  args.insert(args.end(), {"--iters", "1", "--batch-size", "2"});
  EXPECT_EQ(cli(args), kExitOk);
  EXPECT_TRUE(fs::exists(dir_.file("c.ckpt")));
}

TEST_F(CliPipeline, CorruptedCheckpointWritesNothing) {
  std::string bytes = read_text_file(trained_checkpoint());
  bytes[bytes.size() / 2] ^= 0x5a;
  write(dir_.file("bad.ckpt"), bytes);
  const Dataset ds = read_manifest(manifest());
  EXPECT_EQ(cli({"heatmap", "--checkpoint", dir_.file("bad.ckpt"), "--image", ds.images[0].path, "--out",
                 dir_.file("hm.png")}),
            kExitData);
  EXPECT_FALSE(fs::exists(dir_.file("hm.png")));
  EXPECT_EQ(cli({"eval", "--manifest", manifest(), "--checkpoint", dir_.file("bad.ckpt"), "--out",
                 dir_.file("r.tsv")}),
            kExitData);
  EXPECT_FALSE(fs::exists(dir_.file("r.tsv")));
}

TEST_F(CliPipeline, HeatmapsHaveWorkingResolution) {
  const std::string ckpt = trained_checkpoint();
  const Dataset ds = read_manifest(manifest());
  ASSERT_EQ(cli({"heatmap", "--checkpoint", ckpt, "--image", ds.images[0].path, "--class",
                 ds.taxonomy.name(1), "--out", dir_.file("one.png")}),
            kExitOk);
  const Rgb8Image one = read_image(dir_.file("one.png"));
  EXPECT_EQ(one.height, 16);
  EXPECT_EQ(one.width, 16);

  for (const char* mode : {"predicted", "max"}) {
    const std::string out = dir_.file(std::string("maps_") + mode);
    ASSERT_EQ(cli({"heatmap", "--checkpoint", ckpt, "--image", ds.images[0].path, "--image", ds.images[4].path,
                   "--class", mode, "--out", out}),
              kExitOk);
    EXPECT_EQ(std::distance(fs::directory_iterator(out), fs::directory_iterator()), 2);
  }
  EXPECT_EQ(cli({"heatmap", "--checkpoint", ckpt, "--image", ds.images[0].path, "--class", "Nonexistent", "--out",
                 dir_.file("x.png")}),
            kExitConfig);
  EXPECT_EQ(cli({"heatmap", "--checkpoint", ckpt, "--image", ds.images[0].path, "--alpha", "2", "--out",
                 dir_.file("x.png")}),
            kExitConfig);
  EXPECT_FALSE(fs::exists(dir_.file("x.png")));
}

}  // namespace
}  // namespace surgseg
