#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "fixtures.hpp"
#include "json.hpp"

using namespace leap;
using namespace leap::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::path(::testing::TempDir()) / ("leap_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_dataset_file(const fs::path& dir, const Dataset& d) {
  const auto path = (dir / "data.tsv").string();
  std::ofstream out(path);
  write_dataset(out, d, DatasetFormat::tsv);
  return path;
}

Invocation parse(std::vector<std::string> args) {
  args.insert(args.begin(), "leap");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return parse_cli(static_cast<int>(argv.size()), argv.data());
}

int run_main(std::vector<std::string> args, std::string* err_text = nullptr) {
  args.insert(args.begin(), "leap");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
  if (err_text) *err_text = err.str();
  return code;
}

class CliData : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = scratch(::testing::UnitTest::GetInstance()->current_test_info()->name());
    data_ = write_dataset_file(dir_, leap::testing::periodic_dataset(40));
  }
  fs::path dir_;
  std::string data_;
};

}  // namespace

TEST_F(CliData, FlagOverridesConfigFile) {
  const auto cfg = (dir_ / "run.toml").string();
  std::ofstream(cfg) << "# run settings\n[mef]\nwindow = 3\nmodel_dim = 32\n[run]\nseed = \"9\"\n";
  const auto inv = parse({"mef", "--config", cfg, "--data", data_, "--l3", "7"});
  EXPECT_EQ(inv.command, "mef");
  EXPECT_EQ(inv.config.mef.window, 7);
  EXPECT_EQ(inv.config.mef.model_dim, 32u);
  EXPECT_EQ(inv.config.seed, 9u);
}

TEST_F(CliData, UnknownFlagIsUsageError) {
  std::string err;
  EXPECT_EQ(run_main({"mef", "--data", data_, "--frobnicate"}, &err), 2);
  EXPECT_NE(err.find("frobnicate"), std::string::npos);
  EXPECT_THROW(parse({"mef", "--data", data_, "--frobnicate"}), UsageError);
}

TEST_F(CliData, RatiosTriple) {
  const auto inv = parse({"split", "--data", data_, "--ratios", "0.8,0.1,0.1"});
  EXPECT_DOUBLE_EQ(inv.config.ratios.train, 0.8);
  EXPECT_DOUBLE_EQ(inv.config.ratios.valid, 0.1);
  EXPECT_DOUBLE_EQ(inv.config.ratios.test, 0.1);
  EXPECT_THROW(parse({"split", "--data", data_, "--ratios", "0.8,0.1"}), UsageError);
  EXPECT_THROW(parse({"split", "--data", data_, "--ratios", "0.8,-0.1,0.3"}), UsageError);
}

TEST_F(CliData, ConflictingTaskOptions) {
  EXPECT_THROW(parse({"mef", "--data", data_, "--l1", "3"}), UsageError);
  EXPECT_THROW(parse({"train-op1", "--data", data_, "--l3", "3"}), UsageError);
  EXPECT_THROW(parse({"stats", "--data", data_, "--l1", "3", "--l3", "3"}), UsageError);
  EXPECT_THROW(parse({"op1", "--data", data_, "--task", "mef"}), UsageError);
  EXPECT_NO_THROW(parse({"stats", "--data", data_, "--l3", "3"}));
}

TEST_F(CliData, MissingPaths) {
  EXPECT_THROW(parse({"mef"}), UsageError);
  EXPECT_THROW(parse({"mef", "--data", (dir_ / "absent.tsv").string()}), UsageError);
  EXPECT_THROW(parse({"mef", "--data", data_, "--embed-provider", "store", "--store", "nope.bin"}), UsageError);
  EXPECT_THROW(parse({"mef", "--data", data_, "--mef-threshold", "abc"}), UsageError);
}

TEST_F(CliData, MefRunWritesReportAndManifest) {
  const auto out = (dir_ / "out").string();
  ASSERT_EQ(run_main({"mef", "--data", data_, "--out", out, "--mef-model-dim", "8", "--mef-epochs", "2",
                      "--embed-dim", "8"}),
            0);
  const auto report = nlohmann::json::parse(leap::testing::read_text(out + "/report.json"));
  const auto& row = report["rows"][0];
  for (const char* key : {"F1", "Recall", "Precision"}) EXPECT_TRUE(row.contains(key)) << key;
  const auto manifest = nlohmann::json::parse(leap::testing::read_text(out + "/manifest.mef.json"));
  EXPECT_EQ(manifest["status"], "complete");
  EXPECT_EQ(manifest["seed"], 0);
  EXPECT_TRUE(manifest["inputs"].contains(data_));
  EXPECT_TRUE(manifest["artifacts"].contains("metrics.csv"));
  EXPECT_FALSE(manifest["config_hash"].get<std::string>().empty());
  for (const char* file : {"metrics.csv", "predictions.csv", "report.txt", "mef.ckpt"}) {
    EXPECT_TRUE(fs::exists(fs::path(out) / file)) << file;
  }
}

TEST_F(CliData, RerunIsByteIdentical) {
  const std::vector<std::string> common{"--data", data_, "--mef-model-dim", "8", "--mef-epochs", "3",
                                        "--embed-dim", "8", "--seed", "11"};
  auto a = common, b = common;
  a.insert(a.begin(), "mef");
  b.insert(b.begin(), "mef");
  a.insert(a.end(), {"--out", (dir_ / "a").string()});
  b.insert(b.end(), {"--out", (dir_ / "b").string()});
  ASSERT_EQ(run_main(a), 0);
  ASSERT_EQ(run_main(b), 0);
  EXPECT_EQ(leap::testing::read_text((dir_ / "a/metrics.csv").string()),
            leap::testing::read_text((dir_ / "b/metrics.csv").string()));
}

TEST_F(CliData, Op2BaselineWithoutBridge) {
  const auto out = (dir_ / "op2").string();
  ASSERT_EQ(run_main({"op2", "--data", data_, "--out", out, "--generator", "baseline"}), 0);
  const auto report = nlohmann::json::parse(leap::testing::read_text(out + "/report.json"));
  EXPECT_TRUE(report["rows"][0].contains("ROUGE-1"));
  EXPECT_GE(report["rows"][0]["ROUGE-1"].get<double>(), 0.0);
  EXPECT_TRUE(fs::exists(fs::path(out) / "generations.jsonl"));
}

TEST_F(CliData, StageFailureExitsOneAndFlagsManifest) {
  const auto out = (dir_ / "fail").string();
  const auto bad_store = (dir_ / "bad.bin").string();
  std::ofstream(bad_store) << "not a store";
  std::string err;
  EXPECT_EQ(run_main({"mef", "--data", data_, "--out", out, "--embed-provider", "store", "--store", bad_store}, &err),
            1);
  const auto manifest = nlohmann::json::parse(leap::testing::read_text(out + "/manifest.mef.json"));
  EXPECT_EQ(manifest["status"], "failed");
  EXPECT_FALSE(manifest["error"].get<std::string>().empty());
}

TEST_F(CliData, PromptsDumpRecords) {
  const auto out = (dir_ / "prompts").string();
  ASSERT_EQ(run_main({"prompts", "--data", data_, "--out", out, "--l2", "2"}), 0);
  std::istringstream lines(leap::testing::read_text(out + "/prompts.jsonl"));
  std::string line;
  ASSERT_TRUE(std::getline(lines, line));
  const auto j = nlohmann::ordered_json::parse(line);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"uid", "prompt", "answer"}));
}

TEST(CliConfig, CanonicalTextAndHash) {
  RunConfig a, b;
  set_key(b, "mef.window", "9");
  EXPECT_NE(config_hash(a), config_hash(b));
  set_key(a, "mef.window", "9");
  EXPECT_EQ(canonical_config(a), canonical_config(b));
  EXPECT_NE(canonical_config(a).find("split.ratios=0.8,0.1,0.1\n"), std::string::npos);
  EXPECT_EQ(get_key(a, "mef.window"), "9");
  EXPECT_THROW(set_key(a, "mef.nonsense", "1"), UsageError);
  EXPECT_EQ(flag_for("mef.model_dim"), "mef-model-dim");
}

TEST(CliConfig, ParsesSectionsAndComments) {
  const auto kv = parse_config_text("a = 1 # trailing\n; comment\n[mef]\nwindow=\"5\"\n\n[op1]\nlr = 0.01\n");
  ASSERT_EQ(kv.size(), 3u);
  EXPECT_EQ(kv[0], (std::pair<std::string, std::string>{"a", "1"}));
  EXPECT_EQ(kv[1], (std::pair<std::string, std::string>{"mef.window", "5"}));
  EXPECT_EQ(kv[2], (std::pair<std::string, std::string>{"op1.lr", "0.01"}));
  EXPECT_THROW(parse_config_text("no equals sign\n"), UsageError);
}

TEST(CliHelp, HelpAndVersionExitZero) {
  EXPECT_EQ(run_main({"--help"}), 0);
  EXPECT_EQ(run_main({"--version"}), 0);
  EXPECT_EQ(run_main({}), 2);
}
