#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cgf/graphdata.hpp"
#include "cli.hpp"

namespace cgf {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    home_ = fs::current_path();
    dir_ = fs::temp_directory_path() /
           ("cgf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    fs::current_path(dir_);
  }
  void TearDown() override {
    fs::current_path(home_);
    fs::remove_all(dir_);
  }
  void make_data() {
    ASSERT_EQ(run({"make-data", "--count", "20", "--seed", "3", "--min-nodes", "12", "--max-nodes", "13", "--out",
                   "data"})
                  .code,
              0);
  }
  void train_tiny() {
    make_data();
    const auto r = run({"train", "--dataset.dir", "data", "--output_dir", "run", "--train.max_steps", "1",
                        "--train.epochs", "1", "--solver.steps", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  fs::path home_, dir_;
};

TEST_F(CliTest, HelpAndUsageCodes) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"eval", "--sigma", "abc", "--reference", "x"}).code, 2);
}

TEST_F(CliTest, MakeDataSplitsAndUnknownGenerator) {
  make_data();
  EXPECT_EQ(read_graphs("data/train.jsonl").size(), 16u);
  EXPECT_EQ(read_graphs("data/val.jsonl").size(), 2u);
  EXPECT_EQ(read_graphs("data/test.jsonl").size(), 2u);
  const auto meta = nlohmann::json::parse(slurp("data/meta.json"));
  EXPECT_EQ(meta["generator"], "community-small");
  const auto bad = run({"make-data", "--generator", "nope"});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("ego-small"), std::string::npos);
}

TEST_F(CliTest, TrainConfigErrors) {
  make_data();
  const auto unknown = run({"train", "--dataset.dir", "data", "--train.bogus", "1"});
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.err.find("train.bogus"), std::string::npos);
  const auto missing = run({"train", "--dataset.dir", "nowhere"});
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("nowhere/train.jsonl"), std::string::npos);
  EXPECT_EQ(run({"train", "--config", "absent.json"}).code, 2);
  EXPECT_EQ(run({"train", "--dataset.dir", "data", "--model.aggregator", "max"}).code, 2);
  EXPECT_EQ(run({"train", "--dataset.dir", "data", "--train.lr"}).code, 2);
  std::ofstream("cfg.json") << R"({"model": {"hidden": 8}, "extra": 1})";
  EXPECT_EQ(run({"train", "--config", "cfg.json", "--dataset.dir", "data"}).code, 2);
}

TEST_F(CliTest, DryRunPrintsParameterCount) {
  make_data();
  std::ofstream("cfg.json") << R"({"model": {"hidden": 8, "blocks": 1}, "dataset": {"dir": "data"}})";
  const auto r = run({"train", "--config", "cfg.json", "--dry-run"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("parameters: "), std::string::npos);
  EXPECT_FALSE(fs::exists("run"));
}

TEST_F(CliTest, TrainWritesArtifactsAndSampleWritesDot) {
  train_tiny();
  for (const char* f : {"run/model.cgf", "run/loss.csv", "run/summary.json", "run/config.json"}) {
    EXPECT_TRUE(fs::exists(f)) << f;
  }
  EXPECT_EQ(slurp("run/loss.csv").substr(0, 27), "epoch,step,nll_bits_per_dim");
  const auto r = run({"sample", "--checkpoint", "run/model.cgf", "--num", "3", "--sizes", "4:4", "--out", "s.jsonl",
                      "--dot", "dot"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto graphs = read_graphs("s.jsonl");
  ASSERT_EQ(graphs.size(), 3u);
  const std::string dot = slurp("dot/graph_00000.dot");
  EXPECT_EQ(dot.substr(0, 10), "graph G {\n");
  EXPECT_EQ(dot.substr(dot.size() - 2), "}\n");
  std::size_t edges = 0;
  for (std::size_t p = dot.find(" -- "); p != std::string::npos; p = dot.find(" -- ", p + 1)) ++edges;
  EXPECT_EQ(edges, graphs[0].edges().size());
}

TEST_F(CliTest, ConditionalSampleKeepsObservedEdges) {
  train_tiny();
  std::ofstream("obs.json") << R"({"nodes": 5, "edges": [[0, 1, 1], [1, 2, 0], [3, 4, 1]]})";
  const auto r = run({"sample", "--checkpoint", "run/model.cgf", "--num", "5", "--conditional", "obs.json", "--out",
                      "c.jsonl"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& g : read_graphs("c.jsonl")) {
    EXPECT_EQ(g.n(), 5u);
    EXPECT_TRUE(g.has_edge(0, 1));
    EXPECT_FALSE(g.has_edge(1, 2));
    EXPECT_TRUE(g.has_edge(3, 4));
  }
  std::ofstream("bad.json") << R"({"nodes": 3, "edges": [[0, 7, 1]]})";
  EXPECT_EQ(run({"sample", "--checkpoint", "run/model.cgf", "--conditional", "bad.json"}).code, 2);
}

TEST_F(CliTest, EvalCodesAndOutput) {
  make_data();
  const auto r = run({"eval", "--reference", "data/test.jsonl", "--generated", "data/val.jsonl", "--metrics",
                      "degree", "--out", "m.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = nlohmann::json::parse(slurp("m.json"));
  EXPECT_TRUE(m["degree_mmd"].is_number());
  EXPECT_TRUE(m["clustering_mmd"].is_null());
  std::ofstream("empty.jsonl").flush();
  EXPECT_EQ(run({"eval", "--reference", "data/test.jsonl", "--generated", "empty.jsonl"}).code, 2);
  EXPECT_EQ(run({"eval", "--reference", "data/test.jsonl", "--generated", "data/val.jsonl", "--metrics", "x"}).code,
            2);
  EXPECT_EQ(run({"eval", "--reference", "data/test.jsonl", "--generated", "nothing.jsonl"}).code, 2);
  EXPECT_EQ(run({"sample", "--checkpoint", "nothing.cgf"}).code, 2);
}

TEST_F(CliTest, SelftestDetectsInjectedFault) {
  const auto good = run({"selftest"});
  EXPECT_EQ(good.code, 0) << good.out;
  EXPECT_NE(good.out.find("10/10"), std::string::npos);
  const auto bad = run({"selftest", "--inject-fault"});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("FAIL grad.message_networks"), std::string::npos);
  const auto again = run({"selftest"});
  EXPECT_EQ(again.out, good.out);
}

}  // namespace
}  // namespace cgf
