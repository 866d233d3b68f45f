#include "icr/config.hpp"

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::path(ICR_TEST_WORKDIR) / "cli";

int run(const std::string& args, std::string* out = nullptr) {
  fs::create_directories(kWork);
  const fs::path log = kWork / "stdout.txt";
  const std::string cmd = std::string(ICR_CLI) + " " + args + " > " + log.string() + " 2> " + (kWork / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  if (out) {
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    *out = ss.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const std::string& name, const std::string& json) {
  fs::create_directories(kWork);
  const fs::path p = kWork / name;
  std::ofstream(p) << json;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t lines(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

const std::string kSmallExplore = R"({
  "map": {"synthetic_width": 10, "synthetic_height": 12, "resolution": 0.5},
  "strategies": ["icr", "random"],
  "seeds": [1, 2],
  "episode": {"total_steps": 20, "snapshot_steps": [10]}
})";

}  // namespace

TEST(Cli, VersionFlag) {
  std::string out;
  EXPECT_EQ(run("--version", &out), 0);
  EXPECT_NE(out.find(ICR_VERSION), std::string::npos);
}

TEST(Cli, MissingSubcommandIsUsageError) { EXPECT_EQ(run(""), 2); }

TEST(Cli, ExploreWritesLogsAndSnapshots) {
  const auto cfg = write_config("explore.json", kSmallExplore);
  const auto out = kWork / "explore_out";
  fs::remove_all(out);
  ASSERT_EQ(run("explore --config " + cfg.string() + " --out " + out.string()), 0);
  for (const char* stem : {"icr_seed1", "icr_seed2", "random_seed1", "random_seed2"}) {
    EXPECT_EQ(lines(out / (std::string(stem) + ".csv")), 21u) << stem;
    EXPECT_TRUE(fs::exists(out / (std::string(stem) + "_step10_map.pgm")));
    EXPECT_TRUE(fs::exists(out / (std::string(stem) + "_step10_info.pgm")));
  }
  EXPECT_EQ(lines(out / "summary.csv"), 5u);
}

TEST(Cli, ExploreIsDeterministic) {
  const auto cfg = write_config("explore_det.json", kSmallExplore);
  const auto a = kWork / "det_a", b = kWork / "det_b";
  ASSERT_EQ(run("explore --config " + cfg.string() + " --out " + a.string()), 0);
  ASSERT_EQ(run("explore --config " + cfg.string() + " --out " + b.string()), 0);
  for (const auto& entry : fs::directory_iterator(a))
    EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename())) << entry.path();
}

TEST(Cli, SeedOverride) {
  const auto cfg = write_config("explore_seed.json", kSmallExplore);
  const auto out = kWork / "seed_out";
  fs::remove_all(out);
  ASSERT_EQ(run("explore --config " + cfg.string() + " --out " + out.string() + " --seed 42"), 0);
  EXPECT_TRUE(fs::exists(out / "icr_seed42.csv"));
  EXPECT_FALSE(fs::exists(out / "icr_seed1.csv"));
}

TEST(Cli, MissingMapIsInputError) {
  const auto cfg = write_config("nomap.json", R"({"map": {"path": "does_not_exist.pgm"}})");
  EXPECT_EQ(run("explore --config " + cfg.string() + " --out " + (kWork / "x").string()), 3);
}

TEST(Cli, CorruptMapIsInputError) {
  write_config("bad.pgm", "P2\n3 3\n255\n0 0\n");
  const auto cfg = write_config("badmap.json", R"({"map": {"path": "bad.pgm"}})");
  EXPECT_EQ(run("explore --config " + cfg.string() + " --out " + (kWork / "x").string()), 3);
}

TEST(Cli, MalformedConfigIsConfigError) {
  const auto broken = write_config("broken.json", "{ \"seeds\": [1, ");
  EXPECT_EQ(run("explore --config " + broken.string()), 2);
  const auto unknown = write_config("unknown.json", R"({"episode": {"horizn": 5}})");
  EXPECT_EQ(run("explore --config " + unknown.string()), 2);
  const auto invalid = write_config("invalid.json", R"({"episode": {"horizon": 10, "total_steps": 5}})");
  EXPECT_EQ(run("explore --config " + invalid.string()), 2);
  EXPECT_EQ(run("costmap --config " + (kWork / "missing.json").string()), 2);
  const auto sensor = write_config("sensor.json", R"({"tracking": {"sensor": "sonar"}})");
  EXPECT_EQ(run("costmap --config " + sensor.string()), 2);
}

TEST(Cli, GradcheckPassesAndDetectsCorruption) {
  const auto good = write_config("grad.json", R"({"gradcheck": {"instances": 8}})");
  std::string out;
  EXPECT_EQ(run("gradcheck --config " + good.string(), &out), 0);
  EXPECT_NE(out.find("max relative error, iCR gradient"), std::string::npos);
  EXPECT_NE(out.find("worst error per (k, i)"), std::string::npos);
  const auto bad = write_config("grad_bad.json", R"({"gradcheck": {"instances": 8, "corrupt_dexp": true}})");
  EXPECT_EQ(run("gradcheck --config " + bad.string()), 1);
  EXPECT_NE(slurp(kWork / "stderr.txt").find("i=5"), std::string::npos);
}

TEST(Cli, CostmapGridSize) {
  const auto cfg = write_config("costmap.json", R"({"tracking": {"sensor": "range"}})");
  const auto out = kWork / "costmap_out";
  ASSERT_EQ(run("costmap --config " + cfg.string() + " --out " + out.string()), 0);
  EXPECT_EQ(lines(out / "costmap_range.csv"), 61u * 81u + 1u);
  EXPECT_EQ(slurp(out / "costmap_range.csv").substr(0, 9), "x,y,cost\n");
}

TEST(Cli, TrackWithZeroStepKeepsCost) {
  const auto cfg = write_config("track0.json", R"({"tracking": {"alpha": 0, "iterations": 5}})");
  const auto out = kWork / "track0";
  ASSERT_EQ(run("track --config " + cfg.string() + " --out " + out.string()), 0);
  std::ifstream in(out / "track_iterations.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "iter,cost,grad_inf_norm");
  std::set<std::string> costs;
  int rows = 0;
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.find(',', a + 1);
    costs.insert(line.substr(a + 1, b - a - 1));
    ++rows;
  }
  EXPECT_EQ(rows, 6);
  EXPECT_EQ(costs.size(), 1u);
  EXPECT_EQ(slurp(out / "track_trajectory.csv").substr(0, 12), "t,x,y,theta\n");
}

TEST(Cli, TrackLowersCost) {
  const auto cfg = write_config("track.json", R"({"tracking": {"iterations": 50}})");
  const auto out = kWork / "track";
  ASSERT_EQ(run("track --config " + cfg.string() + " --out " + out.string()), 0);
  std::ifstream in(out / "track_iterations.csv");
  std::string line, first, last;
  std::getline(in, line);
  std::getline(in, first);
  last = first;
  while (std::getline(in, line)) last = line;
  auto cost = [](const std::string& row) {
    const auto a = row.find(',');
    return std::stod(row.substr(a + 1, row.find(',', a + 1) - a - 1));
  };
  EXPECT_LT(cost(last), cost(first));
}

TEST(Config, ShippedExamplesParse) {
  for (const auto& entry : fs::directory_iterator(ICR_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_NO_THROW(icr::load_config(entry.path())) << entry.path();
  }
}

TEST(Config, PathsResolveAgainstConfigFile) {
  const auto cfg = write_config("rel.json", R"({"map": {"path": "maps/room.pgm"}})");
  EXPECT_EQ(icr::load_config(cfg).map.path, (kWork / "maps/room.pgm").lexically_normal().string());
}
