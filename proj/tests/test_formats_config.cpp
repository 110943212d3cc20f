#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pfdm/config.hpp"
#include "pfdm/formats.hpp"
#include "pfdm/manifest.hpp"

using namespace pfdm;

TEST(Formats, DatasetRoundTrip) {
  const PendulumEnv env{PendulumParams{}};
  const auto d = generate_dataset(env, UniformInput<PendulumEnv>{&env}, 3, 7, 11);
  std::stringstream ss;
  io::write_dataset(ss, d);
  const auto back = io::read_dataset(ss, io::dataset_sidecar(d));
  EXPECT_TRUE(back == d);
}

TEST(Formats, DatasetRowCountMustMatchSidecar) {
  const PendulumEnv env{PendulumParams{}};
  const auto d = generate_dataset(env, ZeroInput{1}, 2, 4, 1);
  std::stringstream ss;
  io::write_dataset(ss, d);
  auto side = io::dataset_sidecar(d);
  side["steps"] = 5;
  EXPECT_THROW(io::read_dataset(ss, side), InvalidInput);
}

TEST(Formats, QTableRoundTripIsExact) {
  QTable q(4, 3);
  Rng g(1);
  for (std::size_t x = 0; x < 4; ++x)
    for (std::size_t u = 0; u < 3; ++u) q.at(x, u) = uniform(g, -1e3, 1e3);
  std::stringstream ss;
  io::write_qtable(ss, q);
  EXPECT_TRUE(io::read_qtable(ss) == q);
}

TEST(Formats, QTableRejectsMissingRows) {
  std::stringstream ss("# qtable states=2 actions=1\nstate_cell,action_cell,q\n0,0,1\n");
  EXPECT_THROW(io::read_qtable(ss), InvalidInput);
  std::stringstream bad("state_cell,action_cell,q\n0,0,1\n");
  EXPECT_THROW(io::read_qtable(bad), InvalidInput);
}

TEST(Formats, CellValuesRoundTrip) {
  const std::vector<double> v{1.0, 0.1, 1e-300, 0.0, 3.14159};
  std::stringstream ss;
  io::write_cell_values(ss, "z", v);
  EXPECT_EQ(io::read_cell_values(ss, "z"), v);
  std::stringstream wrong("state_cell,q\n0,1\n");
  EXPECT_THROW(io::read_cell_values(wrong, "z"), InvalidInput);
}

TEST(Manifest, Sha256KnownVector) {
  const auto p = std::filesystem::temp_directory_path() / "pfdm_sha_abc.txt";
  std::ofstream(p, std::ios::binary) << "abc";
  EXPECT_EQ(sha256_file(p), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  std::ofstream(p, std::ios::binary | std::ios::trunc);
  EXPECT_EQ(sha256_file(p), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  std::filesystem::remove(p);
}

TEST(Manifest, RecordsRelativePathsAndHashes) {
  const auto dir = std::filesystem::temp_directory_path() / "pfdm_manifest_test";
  std::filesystem::create_directories(dir / "sub");
  std::ofstream(dir / "sub" / "a.csv") << "abc";
  Manifest m("estimate", dir);
  m.output(dir / "sub" / "a.csv");
  m.extra()["k"] = 1;
  const auto j = m.to_json(json{{"seed", 3}}, 3, 2);
  EXPECT_EQ(j["subcommand"], "estimate");
  EXPECT_EQ(j["workers"], 2);
  ASSERT_EQ(j["outputs"].size(), 1u);
  EXPECT_EQ(j["outputs"][0]["path"], "sub/a.csv");
  EXPECT_EQ(j["outputs"][0]["bytes"], 3);
  EXPECT_EQ(j["outputs"][0]["sha256"], "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(j["results"]["k"], 1);
  std::filesystem::remove_all(dir);
}

TEST(Config, DefaultsFromEmptyDocument) {
  const auto c = parse_config(json::object());
  EXPECT_EQ(c.plant.mass, 1.0);
  EXPECT_EQ(c.reference_plant.mass, 0.5);
  EXPECT_EQ(c.grid.theta_bins, 50u);
  EXPECT_EQ(c.fpd.horizon, 2u);
  EXPECT_EQ(c.workers, 1u);
  EXPECT_EQ(c.output_dir, "runs/experiment");
}

TEST(Config, UnknownKeyIsNamed) {
  try {
    parse_config(json{{"klc", {{"bogus", 1}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("klc.bogus"), std::string::npos);
  }
  EXPECT_THROW(parse_config(json{{"nope", 1}}), ConfigError);
}

TEST(Config, BadEnumAndTypeAreRejected) {
  EXPECT_THROW(parse_config(json{{"grid", {{"out_of_range", "wrap"}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"train", {{"algorithm", "td"}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"fpd", {{"horizon", "two"}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"fpd", {{"horizon", 0}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"plant", {{"mass", -1}}}}), ConfigError);
}

TEST(Config, TablesMustReferenceDatasets) {
  const json ok{{"datasets", {{"d", json::object()}}}, {"tables", {{"t", {{"dataset", "d"}}}}}};
  EXPECT_EQ(parse_config(ok).tables.at("t").dataset, "d");
  const json bad{{"tables", {{"t", {{"dataset", "d"}}}}}};
  EXPECT_THROW(parse_config(bad), ConfigError);
}

TEST(Config, OverridesUseDottedPaths) {
  json doc = json::object();
  apply_override(doc, "fpd.horizon=3");
  apply_override(doc, "experiment=demo");
  apply_override(doc, "plant.theta=[-1,1]");
  const auto c = parse_config(doc);
  EXPECT_EQ(c.fpd.horizon, 3u);
  EXPECT_EQ(c.experiment, "demo");
  EXPECT_EQ(c.plant.theta_min, -1.0);
  EXPECT_EQ(c.output_dir, "runs/demo");
  EXPECT_THROW(apply_override(doc, "noequals"), ConfigError);
  EXPECT_THROW(apply_override(doc, "a..b=1"), ConfigError);
  EXPECT_THROW(apply_override(doc, "experiment.x=1"), ConfigError);
}

TEST(Config, ShippedConfigsParse) {
  for (const char* name : {"linear.json", "pendulum.json", "smoke.json"}) {
    const auto c = parse_config(read_config_file(std::string(PFDM_CONFIG_DIR) + "/" + name));
    EXPECT_FALSE(c.datasets.empty()) << name;
  }
}
