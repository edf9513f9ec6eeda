#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "pheno/cli.hpp"
#include "pheno/core_data.hpp"
#include "test_support.hpp"

namespace pheno {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

const char* kConfig = R"({
  "seed": 5,
  "synth": {"n_children_per_class": 8, "duration_min_seconds": 20, "duration_max_seconds": 25},
  "model": {"cell": "GRU", "hidden_size": 8},
  "train": {"batch_size": 8, "learning_rate": 0.01, "max_epochs": 3},
  "search": {"cells": ["GRU"], "hidden_sizes": [8], "batch_sizes": [8], "min_layers": 1,
             "max_layers": 1, "min_dropout": 0, "max_dropout": 0, "max_epochs": 2},
  "fusion": {"max_epochs": 3},
  "evaluation": {"resamples": 50}
})";

// Runs every stage into `dir`; returns the first failing stage or "".
std::string run_pipeline(const fs::path& dir, const fs::path& config, const std::string& jobs) {
  const std::string out = dir.string();
  const std::string cfg = config.string();
  const std::vector<std::vector<std::string>> stages = {
      {"synth", "--config", cfg, "--out", out},
      {"filter", "--config", cfg, "--out", out},
      {"engineer", "--config", cfg, "--out", out},
      {"split", "--config", cfg, "--out", out},
      {"train", "--config", cfg, "--out", out, "--modality", "eye"},
      {"train", "--config", cfg, "--out", out, "--modality", "head"},
      {"tune", "--config", cfg, "--out", out, "--modality", "face", "--trials", "2", "--jobs", jobs},
      {"fuse", "--config", cfg, "--out", out, "--scheme", "linear", "--subset", "eye,head,face"},
      {"eval", "--config", cfg, "--out", out, "--modality", "eye"},
      {"eval", "--config", cfg, "--out", out, "--scheme", "linear", "--subset", "eye,head,face"},
      {"report", "--config", cfg, "--out", out},
  };
  for (const auto& args : stages) {
    const Outcome o = run(args);
    if (o.code != 0) return args[0] + ": " + o.err;
  }
  return "";
}

TEST(CliTest, UnknownSubcommandExitsTwoWithUsage) {
  const Outcome o = run({"frobnicate", "--out", "x"});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("usage"), std::string::npos);
  const auto line = o.err.substr(o.err.rfind('{'));
  EXPECT_EQ(json::parse(line).at("error"), "UnknownSubcommand");
}

TEST(CliTest, MissingRequiredOptionIsUsageError) {
  EXPECT_EQ(run({"synth"}).code, 2);
}

TEST(CliTest, StageErrorIsMachineReadable) {
  testing::TempDir dir("cli_err");
  const Outcome o = run({"filter", "--out", dir.path().string()});
  EXPECT_EQ(o.code, 1);
  const json j = json::parse(o.err.substr(o.err.rfind('{')));
  EXPECT_EQ(j.at("error"), "MissingFile");
}

TEST(CliTest, Sha256KnownDigest) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(CliTest, PipelineCompletesAndRerunsByteIdentically) {
  testing::TempDir dir("cli_pipeline");
  const fs::path config = dir.path() / "c.json";
  write_text_file(config, kConfig);
  ASSERT_EQ(run_pipeline(dir.path() / "a", config, "1"), "");
  ASSERT_EQ(run_pipeline(dir.path() / "b", config, "2"), "");

  for (const char* f : {"metrics.json", "metrics.csv", "roc.csv", "roc.svg", "net_benefit.csv",
                        "net_benefit.svg"}) {
    EXPECT_TRUE(fs::exists(dir.path() / "a" / "reports" / "eye" / f)) << f;
  }
  EXPECT_TRUE(fs::exists(dir.path() / "a" / "summary" / "models.csv"));

  const json a = json::parse(read_text_file(dir.path() / "a" / "run.json"));
  const json b = json::parse(read_text_file(dir.path() / "b" / "run.json"));
  ASSERT_TRUE(a.contains("stages"));
  for (const auto& [key, stage] : a.at("stages").items()) {
    SCOPED_TRACE(key);
    EXPECT_TRUE(stage.contains("seed"));
    EXPECT_TRUE(stage.contains("config"));
    EXPECT_FALSE(stage.at("outputs").empty());
    EXPECT_EQ(stage.at("outputs"), b.at("stages").at(key).at("outputs"));
  }
  EXPECT_EQ(sha256_tree(dir.path() / "a" / "reports"), sha256_tree(dir.path() / "b" / "reports"));

  // Rerunning one stage in place reproduces its recorded digests.
  const json before = a.at("stages").at("train-eye").at("outputs");
  ASSERT_EQ(run({"train", "--config", config.string(), "--out", (dir.path() / "a").string(),
                 "--modality", "eye"})
                .code,
            0);
  const json after = json::parse(read_text_file(dir.path() / "a" / "run.json"));
  EXPECT_EQ(after.at("stages").at("train-eye").at("outputs"), before);
}

}  // namespace
}  // namespace pheno
