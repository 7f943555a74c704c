#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "debias/corpus.hpp"
#include "debias/error.hpp"
#include "debias/text.hpp"

namespace debias::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

int Cli(std::vector<std::string> args) {
  args.insert(args.begin(), "debias");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return Main(static_cast<int>(argv.size()), argv.data());
}

json ReadJson(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::vector<json> ReadLines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("debias_cli_" + std::to_string(::getpid()) + "_" +
                                         ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  std::string Path(const std::string& rel) const { return (root_ / rel).string(); }

  std::string MakeCorpus(int n = 40) {
    EXPECT_EQ(Cli({"gen", "--n", std::to_string(n), "--seed", "7", "--out", Path("gen")}), kExitOk);
    return Path("gen/corpus.jsonl");
  }

  fs::path root_;
};

TEST_F(CliTest, GenWritesRequestedCountAndIsDeterministic) {
  ASSERT_EQ(Cli({"gen", "--n", "2000", "--concepts", "3", "--seed", "7", "--out", Path("a")}), kExitOk);
  ASSERT_EQ(Cli({"gen", "--n", "2000", "--concepts", "3", "--seed", "7", "--out", Path("b")}), kExitOk);
  EXPECT_EQ(LoadCorpus(Path("a/corpus.jsonl")).size(), 2000);
  EXPECT_EQ(HashFile(Path("a/corpus.jsonl")), HashFile(Path("b/corpus.jsonl")));
  const auto m = ReadJson(Path("a/manifest.json"));
  EXPECT_EQ(m["schema"], kManifestSchema);
  EXPECT_EQ(m["tool_version"], kToolVersion);
  EXPECT_EQ(m["command"], "gen");
  EXPECT_EQ(m["seed"], 7);
  EXPECT_EQ(m["corpus_hash"], HashFile(Path("a/corpus.jsonl")));
  EXPECT_EQ(m["outputs"]["corpus"]["hash"], m["corpus_hash"]);
}

TEST_F(CliTest, GenRejectsSingleSentenceCaptions) {
  const int code = Cli({"gen", "--sentences", "1", "--out", Path("bad")});
  EXPECT_EQ(code, kExitErrorBase + static_cast<int>(ErrorCode::kSpecInvalid));
  EXPECT_FALSE(fs::exists(Path("bad/manifest.json")));
}

TEST_F(CliTest, GenHoldoutSharesTheDraw) {
  ASSERT_EQ(Cli({"gen", "--n", "30", "--holdout", "10", "--seed", "3", "--out", Path("h")}), kExitOk);
  ASSERT_EQ(Cli({"gen", "--n", "40", "--seed", "3", "--out", Path("all")}), kExitOk);
  const auto train = LoadCorpus(Path("h/corpus.jsonl"));
  const auto held = LoadCorpus(Path("h/heldout.jsonl"));
  const auto all = LoadCorpus(Path("all/corpus.jsonl"));
  ASSERT_EQ(train.size(), 30);
  ASSERT_EQ(held.size(), 10);
  EXPECT_EQ(held.records[0].caption, all.records[30].caption);
  EXPECT_EQ(held.records[9].image, all.records[39].image);
}

TEST_F(CliTest, AugmentLongClipShortCaptionIsSummary) {
  const auto corpus = MakeCorpus();
  ASSERT_EQ(Cli({"augment", "--corpus", corpus, "--strategy", "longclip", "--preview", "0", "--out", Path("aug")}),
            kExitOk);
  const auto rows = ReadLines(Path("aug/augment.jsonl"));
  ASSERT_EQ(rows.size(), 40u);
  for (const auto& r : rows) {
    EXPECT_EQ(r["short_caption"], r["summary"]);
    EXPECT_EQ(r["n_pre"], 0);
  }
}

TEST_F(CliTest, AugmentDebiasExcludesSummary) {
  const auto corpus = MakeCorpus();
  ASSERT_EQ(Cli({"augment", "--corpus", corpus, "--strategy", "debias", "--preview", "0", "--out", Path("aug")}),
            kExitOk);
  for (const auto& r : ReadLines(Path("aug/augment.jsonl"))) {
    const auto shrt = SplitSentences(r["short_caption"].get<std::string>());
    for (const auto& s : shrt.sentences()) EXPECT_NE(s, r["summary"].get<std::string>());
  }
}

TEST_F(CliTest, AugmentKeepNTakesExactlyN) {
  const auto corpus = MakeCorpus();
  ASSERT_EQ(Cli({"augment", "--corpus", corpus, "--strategy", "keep_n", "--n", "4", "--preview", "0", "--out",
                 Path("aug")}),
            kExitOk);
  const auto records = LoadCorpus(corpus).records;
  const auto rows = ReadLines(Path("aug/augment.jsonl"));
  for (size_t i = 0; i < rows.size(); ++i) {
    const int available = SplitSentences(records[i].caption).size() - 1;
    EXPECT_EQ(rows[i]["short_sentences"], std::min(4, available));
  }
}

TEST_F(CliTest, AugmentRejectsUnknownStrategy) {
  const auto corpus = MakeCorpus();
  EXPECT_NE(Cli({"augment", "--corpus", corpus, "--strategy", "bogus", "--out", Path("aug")}), kExitOk);
}

TEST_F(CliTest, ConfigPrecedenceDefaultsFileFlags) {
  const auto corpus = MakeCorpus(32);
  {
    std::ofstream cfg(Path("cfg.json"));
    cfg << R"({"train": {"epochs": 2, "batch_size": 8, "text": {"model_dim": 16, "ff_dim": 32, "base_context": 32}}})";
  }
  ASSERT_EQ(Cli({"train", "--corpus", corpus, "--config", Path("cfg.json"), "--epochs", "1", "--lambda-short", "0.25",
                 "--out", Path("t")}),
            kExitOk);
  const auto c = ReadJson(Path("t/manifest.json"))["config"]["train"];
  EXPECT_EQ(c["epochs"], 1);            // flag beats file
  EXPECT_EQ(c["batch_size"], 8);        // file beats default
  EXPECT_EQ(c["text"]["model_dim"], 16);
  EXPECT_EQ(c["loss"]["lambda_short"], 0.25);
  EXPECT_EQ(c["weight_decay"], DefaultConfig("train")["train"]["weight_decay"]);  // default kept
  EXPECT_EQ(ReadLines(Path("t/metrics.jsonl")).size(), 4u);
}

TEST_F(CliTest, TrainModeDebiasRecordsRecommendedWeight) {
  const auto corpus = MakeCorpus(32);
  ASSERT_EQ(Cli({"train", "--corpus", corpus, "--mode", "debias", "--lambda-short", "0.1", "--epochs", "1",
                 "--batch-size", "8", "--model-dim", "16", "--ff-dim", "32", "--base-context", "32", "--out",
                 Path("t")}),
            kExitOk);
  const auto c = ReadJson(Path("t/manifest.json"))["config"]["train"];
  EXPECT_EQ(c["mode"], "debias");
  EXPECT_EQ(c["loss"]["lambda_short"], 0.1);
  EXPECT_TRUE(c["loss"]["weighted"].get<bool>());
  EXPECT_EQ(c["augment"]["strategy"], "random");
}

TEST_F(CliTest, RerunReproducesTrainingBytes) {
  const auto corpus = MakeCorpus(32);
  ASSERT_EQ(Cli({"train", "--corpus", corpus, "--epochs", "1", "--batch-size", "8", "--model-dim", "16", "--ff-dim",
                 "32", "--base-context", "32", "--seed", "4", "--out", Path("t")}),
            kExitOk);
  EXPECT_EQ(Cli({"rerun", "--manifest", Path("t/manifest.json"), "--out", Path("t2")}), kExitOk);
  EXPECT_EQ(HashFile(Path("t/checkpoint.json")), HashFile(Path("t2/checkpoint.json")));
  EXPECT_EQ(HashFile(Path("t/manifest.json")), HashFile(Path("t2/manifest.json")));
  EXPECT_EQ(ReadJson(Path("t/manifest.json"))["seed"], 4);
}

TEST_F(CliTest, RerunDetectsChangedInput) {
  const auto corpus = MakeCorpus();
  ASSERT_EQ(Cli({"augment", "--corpus", corpus, "--out", Path("aug")}), kExitOk);
  std::ofstream(corpus, std::ios::app) << "\n";
  EXPECT_EQ(Cli({"rerun", "--manifest", Path("aug/manifest.json"), "--out", Path("aug2")}),
            kExitErrorBase + static_cast<int>(ErrorCode::kResumeMismatch));
}

TEST_F(CliTest, OneManifestPerDirectory) {
  const auto corpus = MakeCorpus();
  EXPECT_NE(Cli({"augment", "--corpus", corpus, "--out", Path("gen")}), kExitOk);
  EXPECT_EQ(ReadJson(Path("gen/manifest.json"))["command"], "gen");
}

TEST_F(CliTest, OutputRootFromEnvironment) {
  ::setenv("DEBIAS_OUT_ROOT", Path("root").c_str(), 1);
  const int code = Cli({"stretch", "--rows", "10", "--dim", "3", "--freeze", "2", "--factor", "2"});
  ::unsetenv("DEBIAS_OUT_ROOT");
  ASSERT_EQ(code, kExitOk);
  const auto t = ReadJson(Path("root/stretch/table.json"));
  EXPECT_EQ(t["rows"].size(), 18u);
  EXPECT_EQ(t["frozen_prefix"], 2);
}

TEST_F(CliTest, FileFormOutNamesTheArtifact) {
  ASSERT_EQ(Cli({"stretch", "--out", Path("s/custom.json")}), kExitOk);
  EXPECT_EQ(ReadJson(Path("s/custom.json"))["rows"].size(), 248u);
  EXPECT_EQ(ReadJson(Path("s/manifest.json"))["outputs"]["table"]["file"], "custom.json");
}

TEST_F(CliTest, ReportRejectsUnknownInputs) {
  {
    std::ofstream(Path("x.txt")) << "hello";
  }
  EXPECT_NE(Cli({"report", Path("x.txt"), "--out", Path("r")}), kExitOk);
  EXPECT_EQ(Cli({"nonsense"}), kExitUsage);
}

}  // namespace
}  // namespace debias::cli
