#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int status = 0;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(MMI_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, {}};
  std::array<char, 4096> buf{};
  while (const std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
  r.status = pclose(pipe);
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(MMI_TEST_WORKDIR) / ::testing::UnitTest::GetInstance()->current_test_info()->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write_config(const std::string& name, const json& j) const { std::ofstream(dir_ / name) << j.dump(2); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, SynthThenCvWritesTwentyFiveFolds) {
  ASSERT_EQ(run("synth --preset fourclass --seed 7 --out " + path("d")).status, 0);
  write_config("c.json", {{"data", {{"path", path("d")}}},
                          {"pipeline", "csp"},
                          {"seed", 1},
                          {"cv", {{"k", 5}, {"repeats", 5}, {"seed", 1}}},
                          {"out", path("r.json")}});
  ASSERT_EQ(run("cv --config " + path("c.json")).status, 0);
  ASSERT_TRUE(fs::exists(path("r.json")));
  const auto report = json::parse(slurp(path("r.json")));
  EXPECT_EQ(report.at("folds").size(), 25u);
  for (const char* key : {"config", "folds", "mean", "std", "confusion", "mi_trace", "wall_ms"})
    EXPECT_TRUE(report.contains(key)) << key;
  EXPECT_EQ(report.at("confusion").size(), 4u);
}

TEST_F(Cli, RepeatedRunsAreByteIdentical) {
  ASSERT_EQ(run("synth --preset jointpair --seed 3 --out " + path("d1")).status, 0);
  ASSERT_EQ(run("synth --preset jointpair --seed 3 --out " + path("d2")).status, 0);
  EXPECT_EQ(slurp(path("d1/features.csv")), slurp(path("d2/features.csv")));
  const std::string cv = "cv --preset jointpair --pipeline mmi_lint --seed 2 --out " + path("r.json");
  ASSERT_EQ(run(cv).status, 0);
  const auto a = slurp(path("r.json"));
  fs::remove(path("r.json"));
  ASSERT_EQ(run(cv).status, 0);
  const auto b = slurp(path("r.json"));
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, b);
}

TEST_F(Cli, MiPrintsEstimateEntropyAndBounds) {
  ASSERT_EQ(run("synth --preset jointpair --seed 1 --out " + path("d")).status, 0);
  const auto r = run("mi --features " + path("d/features.csv") + " --labels " + path("d/labels.csv"));
  ASSERT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("I(Y;C)"), std::string::npos);
  EXPECT_NE(r.out.find("H(C)"), std::string::npos);
  EXPECT_NE(r.out.find("Fano"), std::string::npos);
  EXPECT_NE(r.out.find("Hellman-Raviv"), std::string::npos);
}

TEST_F(Cli, NonlinearPipelineRunsEndToEnd) {
  write_config("c.json", {{"data", {{"preset", "jointpair"}, {"seed", 1}}},
                          {"pipeline", "mmi_nonlint"},
                          {"seed", 1},
                          {"cv", {{"k", 5}, {"repeats", 1}, {"seed", 1}}},
                          {"out", path("r.json")}});
  ASSERT_EQ(run("cv --config " + path("c.json")).status, 0);
  const auto report = json::parse(slurp(path("r.json")));
  EXPECT_EQ(report.at("folds").size(), 5u);
  EXPECT_EQ(report.at("mi_trace").size(), 21u);
}

TEST_F(Cli, FitThenDecode) {
  ASSERT_EQ(run("synth --preset fourclass --seed 2 --out " + path("d")).status, 0);
  ASSERT_EQ(run("fit --preset fourclass --pipeline fbcsp --seed 1 --out " + path("m.json")).status, 0);
  ASSERT_EQ(run("decode --model " + path("m.json") + " --data " + path("d") + " --out " + path("r.json")).status, 0);
  const auto report = json::parse(slurp(path("r.json")));
  EXPECT_EQ(report.at("trials").size(), 160u);
  EXPECT_GE(report.at("accuracy").get<double>(), 0.9);
}

TEST_F(Cli, ErrorsExitNonzero) {
  EXPECT_NE(run("bogus").status, 0);
  EXPECT_NE(run("cv --preset fourclass --pipeline lda --seed 1").status, 0);
  EXPECT_NE(run("mi --features " + path("missing.csv") + " --labels " + path("missing.csv")).status, 0);
  EXPECT_NE(run("synth --preset fourclass --out " + path("d")).status, 0);  // seed required
}
