#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "overload/io.hpp"

namespace fs = std::filesystem;
using overload::io::json;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(OVERLOAD_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("overload_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Cli, GenThenNms) {
  const auto dir = scratch("gen");
  ASSERT_EQ(run("gen --scenario worst --n 200 --seed 3 -o " + dir.string()), 0);
  ASSERT_TRUE(fs::exists(dir / "worst.csv"));
  ASSERT_TRUE(fs::exists(dir / "manifest.json"));

  const auto out = dir / "nms";
  ASSERT_EQ(run("nms -i " + (dir / "worst.csv").string() + " --tiou 1 -o " + out.string()), 0);
  const auto report = overload::io::read_json_file(out / "nms_report.json");
  EXPECT_EQ(report["kept_count"], 200);
  EXPECT_EQ(report["n_pairwise"], 19900);
  const auto manifest = overload::io::read_json_file(out / "manifest.json");
  EXPECT_EQ(manifest["subcommand"], "nms");
}

TEST(Cli, DeterministicOutputs) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(run("gen --scenario random --n 300 --seed 9 -o " + a.string()), 0);
  ASSERT_EQ(run("gen --scenario random --n 300 --seed 9 -o " + b.string()), 0);
  EXPECT_EQ(slurp(a / "random.csv"), slurp(b / "random.csv"));

  ASSERT_EQ(run("attack --seed-image 2 --k 5 -o " + a.string()), 0);
  ASSERT_EQ(run("attack --seed-image 2 --k 5 -o " + b.string()), 0);
  EXPECT_EQ(slurp(a / "adv.ovl"), slurp(b / "adv.ovl"));
  EXPECT_EQ(slurp(a / "trace.csv"), slurp(b / "trace.csv"));
}

TEST(Cli, Simulate) {
  const auto dir = scratch("sim");
  ASSERT_EQ(run("simulate --requests 100 --ratio 0,0.5 -o " + dir.string()), 0);
  const auto s = overload::io::read_json_file(dir / "summary.json");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_NEAR(s[0]["fps"].get<double>(), 47.619, 1e-3);
  EXPECT_GT(s[1]["mean_ms"].get<double>(), s[0]["mean_ms"].get<double>());
  EXPECT_TRUE(fs::exists(dir / "sim_0.csv"));
  EXPECT_TRUE(fs::exists(dir / "sim_0.5.csv"));
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("codes");
  EXPECT_EQ(run("nms --bogus"), 2);
  EXPECT_EQ(run("nms -i " + (dir / "missing.csv").string() + " -o " + dir.string()), 3);
  EXPECT_EQ(run("bench --sizes 10 -o " + dir.string()), 4);
  EXPECT_EQ(run("attack --seed-image 1 --eps -1 -o " + dir.string()), 2);

  std::ofstream(dir / "bad.json") << R"({"nms": {"tiou": 0.5}})";
  ASSERT_EQ(run("gen --scenario best --n 10 -o " + dir.string()), 0);
  EXPECT_EQ(run("nms -i " + (dir / "best.csv").string() + " --config " + (dir / "bad.json").string() + " -o " + dir.string()), 2);

  std::ofstream(dir / "broken.csv") << "x1,y1,x2,y2,objectness,p_0\n0,0,1,1,nope,1\n";
  EXPECT_EQ(run("nms -i " + (dir / "broken.csv").string() + " -o " + dir.string()), 3);
}

TEST(Cli, ConfigFileAndOverride) {
  const auto dir = scratch("cfg");
  ASSERT_EQ(run("gen --scenario best --n 50 -o " + dir.string()), 0);
  std::ofstream(dir / "c.json") << R"({"nms": {"max_detections": 1}})";
  ASSERT_EQ(run("nms -i " + (dir / "best.csv").string() + " --tiou 1 --config " + (dir / "c.json").string() + " -o " +
                dir.string()),
            0);
  EXPECT_EQ(overload::io::read_json_file(dir / "nms_report.json")["kept_count"], 1);
  ASSERT_EQ(run("nms -i " + (dir / "best.csv").string() + " --tiou 1 --max-detections 7 --config " +
                (dir / "c.json").string() + " -o " + dir.string()),
            0);
  EXPECT_EQ(overload::io::read_json_file(dir / "nms_report.json")["kept_count"], 7);
}
