#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cli_runner.hpp"

namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) { return fs::temp_directory_path() / ("pfdm_cli_" + name); }
}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli::run(""), 2);
  EXPECT_EQ(cli::run("frobnicate --config x"), 2);
  EXPECT_EQ(cli::run("estimate"), 2);
  EXPECT_EQ(cli::run("estimate --config " + cli::config("smoke.json") + " --workers 0"), 2);
}

TEST(Cli, InvalidConfigExitsTwo) {
  const auto dir = scratch("badcfg");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.json") << R"({"klc": {"bogus": 1}})";
  EXPECT_EQ(cli::run("klc --config " + (dir / "bad.json").string()), 2);
  std::ofstream(dir / "broken.json") << "{";
  EXPECT_EQ(cli::run("gen-data --config " + (dir / "broken.json").string()), 2);
  EXPECT_EQ(cli::run("gen-data --config " + (dir / "missing.json").string()), 2);
  EXPECT_EQ(cli::run("gen-data --config " + cli::config("smoke.json") + " --set fpd.horizon=0"), 2);
  fs::remove_all(dir);
}

TEST(Cli, MissingInputFileExitsTwo) {
  const auto out = scratch("noinput");
  fs::remove_all(out);
  EXPECT_EQ(cli::run("estimate --config " + cli::config("smoke.json") + " --out " + out.string()), 2);
  EXPECT_EQ(cli::run("fpd --config " + cli::config("smoke.json") + " --out " + out.string()), 2);
  fs::remove_all(out);
}

TEST(Cli, SmokePipelineIsWorkerInvariant) {
  const auto a = scratch("smoke_w1"), b = scratch("smoke_w3");
  ASSERT_EQ(cli::pipeline(cli::config("smoke.json"), a, 1), "");
  ASSERT_EQ(cli::pipeline(cli::config("smoke.json"), b, 3), "");
  const auto ha = cli::output_hashes(a), hb = cli::output_hashes(b);
  EXPECT_GT(ha.size(), 20u);
  EXPECT_EQ(ha, hb);
  for (const char* f : {"figures/fig3.csv", "figures/fig9.csv", "klc/summary.json", "fpd/policy.csv"})
    EXPECT_TRUE(ha.count(f)) << f;
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, SeedOverrideChangesData) {
  const auto a = scratch("seed_a"), b = scratch("seed_b");
  const auto cfg = cli::config("smoke.json");
  fs::remove_all(a);
  fs::remove_all(b);
  ASSERT_EQ(cli::run("gen-data --config " + cfg + " --out " + a.string()), 0);
  ASSERT_EQ(cli::run("gen-data --config " + cfg + " --out " + b.string() + " --seed 99"), 0);
  const auto ha = cli::output_hashes(a), hb = cli::output_hashes(b);
  ASSERT_FALSE(ha.empty());
  EXPECT_NE(ha, hb);
  fs::remove_all(a);
  fs::remove_all(b);
}
