// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "../common/oracles.hpp"
#include "json.hpp"
#include "smc/config.hpp"

#ifndef SMC_UDA_EXE
#error "SMC_UDA_EXE must name the CLI binary"
#endif

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(SMC_UDA_EXE) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json read_json(const fs::path& p) {
  nlohmann::json j;
  std::ifstream(p) >> j;
  return j;
}

}  // namespace

TEST(Cli, HelpOnEverySubcommandExitsZero) {
  EXPECT_EQ(run("--help"), 0);
  for (const char* sub : {"phantom", "phantom gen", "edge", "sample", "train", "eval", "reconstruct", "report"}) {
    EXPECT_EQ(run(std::string(sub) + " --help"), 0) << sub;
  }
}

TEST(Cli, UnknownSubcommandOrFlagExitsOne) {
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("edge --bogus 3 --input x --out y"), 1);
  EXPECT_EQ(run(""), 1);
}

TEST(Cli, InvalidValueIsValidationError) {
  const auto dir = smc::testing::scratch_dir("cli_bad");
  EXPECT_EQ(run("train --data " + (dir / "none.json").string() + " --mode sideways --out " + dir.string()), 1);
  EXPECT_EQ(run("reconstruct --snapshot x.ply --alpha -2 --out " + dir.string()), 1);
}

TEST(Cli, MissingInputIsRuntimeError) {
  const auto dir = smc::testing::scratch_dir("cli_missing");
  EXPECT_EQ(run("edge --input " + (dir / "nothing.svol").string() + " --out " + (dir / "e").string()), 2);
}

TEST(Cli, EndToEndPipeline) {
  const auto dir = smc::testing::scratch_dir("cli_e2e");
  const std::string d = dir.string();
  ASSERT_EQ(run("phantom gen --source 1 --target 1 --seed 3 --side 32 32 32 --out " + d + "/data"), 0);
  ASSERT_TRUE(fs::exists(dir / "data" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "data" / "run_manifest.json"));

  ASSERT_EQ(run("edge --input " + d + "/data/src_000/image.svol --out " + d + "/edge"), 0);
  EXPECT_GT(read_json(dir / "edge" / "edges.json").at("edge_voxels").get<int>(), 0);

  ASSERT_EQ(run("sample --edges " + d + "/edge/edges.smask --mask " + d + "/data/src_000/mask.smask --n 4000 --seed 5 --out " +
                d + "/sample"),
            0);
  ASSERT_TRUE(fs::exists(dir / "sample" / "points.ply"));

  ASSERT_EQ(run("reconstruct --snapshot " + d + "/sample/points.ply --out " + d + "/recon"), 0);
  const auto info = read_json(dir / "recon" / "points.json");
  EXPECT_GT(info.at("solid_voxels").get<int>(), 0);

  smc::TrainConfig cfg = smc::desk_profile();
  cfg.max_iters = 2;
  cfg.val_interval = 2;
  cfg.milestones = {};
  cfg.points = 64;
  cfg.batch_source = 1;
  cfg.batch_target = 1;
  cfg.backbone.scales = 2;
  cfg.backbone.image_channels = {2, 2};
  cfg.backbone.point_channels = {2, 2};
  cfg.backbone.decoder_dim = 2;
  cfg.backbone.image_blocks = 1;
  std::ofstream(dir / "tiny.json") << smc::to_json(cfg).dump(2);
  ASSERT_EQ(run("train --config " + d + "/tiny.json --data " + d + "/data/manifest.json --mode uda --out " + d + "/train"), 0);
  ASSERT_TRUE(fs::exists(dir / "train" / "model.ckpt"));
  ASSERT_TRUE(fs::exists(dir / "train" / "losses.csv"));

  ASSERT_EQ(run("eval --checkpoint " + d + "/train/model.ckpt --data " + d + "/data/manifest.json --domain target --out " + d +
                "/eval"),
            0);
  const auto report = read_json(dir / "eval" / "report.json");
  EXPECT_EQ(report.at("cases").size(), 1u);

  ASSERT_EQ(run("report --input " + d + "/eval --name tiny --out " + d + "/summary"), 0);
  std::ifstream csv(dir / "summary" / "summary.csv");
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_EQ(row.rfind("tiny,1,", 0), 0u);
}
