#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dagsynth/table.hpp"
#include "dagsynth/toy.hpp"

namespace dagsynth {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dagsynth_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    const DataTable toy = make_label_noise_toy(200, 1);
    write_csv(toy, dir_ / "toy.csv");
    write_csv(toy.select_columns(std::vector<std::string>{"x"}), dir_ / "dist.csv");
    std::ofstream(dir_ / "dag.json")
        << R"({"edges": [["x", "y"], ["y", "z"]], "conditional_inputs": ["x"]})";
    std::ofstream(dir_ / "train.json")
        << R"({"epochs": 1, "batch_size": 50, "dims": {"noise": 4, "hidden": 8, "context": 6},
              "critic": {"width": 16}})";
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Exit status of the CLI; stderr lands in err.txt.
  int run(const std::string& args) {
    const std::string cmd = std::string(DAGSYNTH_CLI_PATH) + " " + args + " > " +
                            (dir_ / "out.txt").string() + " 2> " + (dir_ / "err.txt").string();
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  }

  std::string p(const char* name) const { return (dir_ / name).string(); }

  void fit() {
    ASSERT_EQ(run("fit --data " + p("toy.csv") + " --dag " + p("dag.json") + " --config " +
                  p("train.json") + " --out " + p("model")),
              0)
        << slurp(dir_ / "err.txt");
  }

  fs::path dir_;
};

TEST_F(CliTest, FitThenSampleIsReproducible) {
  fit();
  const std::string base = "sample --model " + p("model") + " --ci " + p("toy.csv") + " --seed 7";
  ASSERT_EQ(run(base + " --out " + p("a.csv")), 0) << slurp(dir_ / "err.txt");
  ASSERT_EQ(run(base + " --out " + p("b.csv")), 0);
  const std::string a = slurp(dir_ / "a.csv");
  EXPECT_EQ(a.substr(0, a.find('\n')), "x,y,z");
  EXPECT_EQ(a, slurp(dir_ / "b.csv"));
}

TEST_F(CliTest, CompleteAndEvaluate) {
  fit();
  // The distributor's own generated columns would collide.
  EXPECT_EQ(run("complete --model " + p("model") + " --distributor " + p("toy.csv") + " --out " +
                p("bad.csv")),
            2);
  ASSERT_EQ(run("complete --model " + p("model") + " --distributor " + p("dist.csv") +
                " --chunk-size 64 --out " + p("done.csv")),
            0)
      << slurp(dir_ / "err.txt");
  ASSERT_EQ(run("evaluate --original " + p("toy.csv") + " --synthetic " + p("done.csv") +
                " --level 2 --dag " + p("dag.json") + " --exclude-ci --out " + p("r.json")),
            0)
      << slurp(dir_ / "err.txt");
  const auto r = nlohmann::json::parse(slurp(dir_ / "r.json"));
  EXPECT_EQ(r["srmse_level2"].size(), 1u);
}

TEST_F(CliTest, EvaluateSchemaMismatchExitsTwo) {
  std::ofstream(dir_ / "other.csv") << "x,w\nc0,1\nc1,2\n";
  EXPECT_EQ(run("evaluate --original " + p("toy.csv") + " --synthetic " + p("other.csv")), 2);
  EXPECT_NE(slurp(dir_ / "err.txt").find("error:"), std::string::npos);
  EXPECT_EQ(run("--json evaluate --original " + p("toy.csv") + " --synthetic " + p("other.csv")), 2);
  const auto j = nlohmann::json::parse(slurp(dir_ / "out.txt"));
  EXPECT_EQ(j["error"], "SchemaMismatch");
}

TEST_F(CliTest, EvaluateSelfIsZero) {
  ASSERT_EQ(run("--json evaluate --original " + p("toy.csv") + " --synthetic " + p("toy.csv") +
                " --out " + p("r.json")),
            0)
      << slurp(dir_ / "err.txt");
  const auto r = nlohmann::json::parse(slurp(dir_ / "r.json"));
  EXPECT_EQ(r["srmse_level1"].size(), 3u);
  for (const auto& e : r["srmse_level1"]) {
    EXPECT_EQ(e["value"].get<double>(), 0.0);
  }
}

TEST_F(CliTest, BiasAndAggregate) {
  std::ofstream(dir_ / "rules.json")
      << R"([{"variable": "x", "op": "eq", "value": "c0", "rate": 1.0}])";
  ASSERT_EQ(run("bias --data " + p("toy.csv") + " --rules " + p("rules.json") + " --out " +
                p("biased.csv")),
            0)
      << slurp(dir_ / "err.txt");
  const std::string biased = slurp(dir_ / "biased.csv");
  EXPECT_EQ(biased.find("\nc0,"), std::string::npos);

  write_csv(make_population_toy(300, 2), dir_ / "pop.csv");
  std::ofstream(dir_ / "spec.json")
      << R"({"value": "hh_vehicles", "stratum": "region", "household_size": "hh_size"})";
  ASSERT_EQ(run("aggregate --data " + p("pop.csv") + " --spec " + p("spec.json") + " --out " +
                p("agg.json")),
            0)
      << slurp(dir_ / "err.txt");
  EXPECT_TRUE(fs::exists(dir_ / "agg.json"));
  EXPECT_FALSE(slurp(dir_ / "agg.json").empty());
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("sample --model " + p("nowhere") + " --out " + p("x.csv") + " --rows 3"), 1);
}

}  // namespace
}  // namespace dagsynth
