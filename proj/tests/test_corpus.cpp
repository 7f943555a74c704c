#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <unistd.h>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "debias/corpus.hpp"
#include "debias/error.hpp"
#include "debias/text.hpp"

namespace debias {
namespace {

namespace fs = std::filesystem;

fs::path TempPath(const std::string& name) {
  return fs::temp_directory_path() / ("debias_test_" + std::to_string(::getpid()) + "_" + name);
}

TEST(SyntheticCorpusSpec, Validation) {
  SyntheticCorpusSpec spec;
  EXPECT_NO_THROW(spec.Validate());
  auto expect_invalid = [](SyntheticCorpusSpec s) {
    try {
      s.Validate();
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kSpecInvalid);
    }
  };
  spec.min_sentences = 1;
  spec.max_sentences = 1;
  expect_invalid(spec);
  spec = SyntheticCorpusSpec{};
  spec.min_sentences = 3;
  expect_invalid(spec);  // 3 concepts need 3 detail sentences
  spec = SyntheticCorpusSpec{};
  spec.max_sentences = 3;
  expect_invalid(spec);
  spec = SyntheticCorpusSpec{};
  spec.n_samples = 0;
  expect_invalid(spec);
  spec = SyntheticCorpusSpec{};
  spec.image_noise_sigma = -1;
  expect_invalid(spec);
}

TEST(GenerateCorpus, SummaryNamesEveryConcept) {
  SyntheticCorpusSpec spec;
  spec.n_samples = 200;
  Rng rng(1);
  const auto corpus = GenerateCorpus(spec, rng);
  const auto lex = MakeLexicon(spec);
  ASSERT_EQ(corpus.size(), 200);
  for (const auto& r : corpus.records) {
    const auto c = SplitSentences(r.caption);
    ASSERT_GE(c.size(), spec.min_sentences);
    ASSERT_LE(c.size(), spec.max_sentences);
    ASSERT_EQ(r.concepts.size(), 3u);
    const auto words = TextToTokens(c.sentence(0));
    const std::set<std::string> summary(words.begin(), words.end());
    for (int concept_id : r.concepts) EXPECT_TRUE(summary.count(lex.names[static_cast<size_t>(concept_id)][0]) != 0);
  }
}

TEST(GenerateCorpus, EachDetailSentenceDescribesOneConceptAndAllAreCovered) {
  SyntheticCorpusSpec spec;
  spec.n_samples = 200;
  Rng rng(2);
  const auto corpus = GenerateCorpus(spec, rng);
  const auto lex = MakeLexicon(spec);
  std::map<std::string, int> owner;
  for (int c = 0; c < spec.vocab_size; ++c)
    for (const auto& w : lex.detail_words[static_cast<size_t>(c)]) owner[w] = c;
  for (const auto& r : corpus.records) {
    const auto c = SplitSentences(r.caption);
    std::set<int> covered;
    for (int j = 1; j < c.size(); ++j) {
      std::set<int> in_sentence;
      for (const auto& t : TextToTokens(c.sentence(j)))
        if (owner.count(t)) in_sentence.insert(owner[t]);
      ASSERT_EQ(in_sentence.size(), 1u);
      covered.insert(*in_sentence.begin());
    }
    EXPECT_EQ(covered, std::set<int>(r.concepts.begin(), r.concepts.end()));
  }
}

TEST(GenerateCorpus, NoiselessIdenticalConceptsGiveIdenticalImages) {
  SyntheticCorpusSpec spec;
  spec.n_samples = 400;
  spec.vocab_size = 4;
  spec.concepts_per_image = 3;
  spec.image_noise_sigma = 0.0;
  Rng rng(3);
  const auto corpus = GenerateCorpus(spec, rng);
  std::map<std::set<int>, std::vector<double>> seen;
  int repeats = 0;
  for (const auto& r : corpus.records) {
    std::set<int> key(r.concepts.begin(), r.concepts.end());
    auto [it, inserted] = seen.emplace(key, r.image);
    if (!inserted) {
      ++repeats;
      EXPECT_EQ(it->second, r.image);
    }
  }
  EXPECT_GT(repeats, 0);
}

TEST(GenerateCorpus, DeterministicForSeed) {
  SyntheticCorpusSpec spec;
  spec.n_samples = 50;
  Rng a(9);
  Rng b(9);
  const auto ca = GenerateCorpus(spec, a);
  const auto cb = GenerateCorpus(spec, b);
  for (size_t i = 0; i < ca.records.size(); ++i) {
    EXPECT_EQ(ca.records[i].caption, cb.records[i].caption);
    EXPECT_EQ(ca.records[i].image, cb.records[i].image);
  }
}

// Concept images are fitted by least squares from the concepts each record's
// detail sentences mention; a query is the fitted sum for its mentions and is
// matched to the nearest image. Summaries are never consulted.
TEST(GenerateCorpus, DetailSentencesAloneSolveRetrieval) {
  SyntheticCorpusSpec spec;
  spec.n_samples = 256;
  Rng rng(4);
  const auto corpus = GenerateCorpus(spec, rng);
  const auto lex = MakeLexicon(spec);
  std::map<std::string, int> owner;
  for (int c = 0; c < spec.vocab_size; ++c)
    for (const auto& w : lex.detail_words[static_cast<size_t>(c)]) owner[w] = c;
  const int n = corpus.size();
  const int d = corpus.image_dim();
  Eigen::MatrixXd images(n, d);
  Eigen::MatrixXd mentions = Eigen::MatrixXd::Zero(n, spec.vocab_size);
  for (int i = 0; i < n; ++i) {
    const auto& r = corpus.records[static_cast<size_t>(i)];
    images.row(i) = Eigen::Map<const Eigen::RowVectorXd>(r.image.data(), d);
    const auto c = SplitSentences(r.caption);
    for (int j = 1; j < c.size(); ++j)
      for (const auto& t : TextToTokens(c.sentence(j)))
        if (owner.count(t)) mentions(i, owner[t]) = 1.0;
  }
  const Eigen::MatrixXd fitted = mentions.colPivHouseholderQr().solve(images);
  const Eigen::MatrixXd queries = mentions * fitted;

  int hits = 0;
  for (int i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    (images.rowwise() - queries.row(i)).rowwise().squaredNorm().minCoeff(&best);
    if (best == i) ++hits;
  }
  EXPECT_EQ(hits, n);
}

TEST(CorpusIo, SaveLoadRoundTripAndHash) {
  SyntheticCorpusSpec spec;
  spec.n_samples = 20;
  Rng rng(5);
  const auto corpus = GenerateCorpus(spec, rng);
  const auto a = TempPath("a.jsonl");
  const auto b = TempPath("b.jsonl");
  SaveCorpus(corpus, a);
  const auto loaded = LoadCorpus(a);
  ASSERT_EQ(loaded.size(), corpus.size());
  for (int i = 0; i < corpus.size(); ++i) {
    const auto& x = corpus.records[static_cast<size_t>(i)];
    const auto& y = loaded.records[static_cast<size_t>(i)];
    EXPECT_EQ(x.id, y.id);
    EXPECT_EQ(x.caption, y.caption);
    EXPECT_EQ(x.image, y.image);
    EXPECT_EQ(x.concepts, y.concepts);
  }
  SaveCorpus(loaded, b);
  EXPECT_EQ(HashFile(a), HashFile(b));
  fs::remove(a);
  fs::remove(b);
}

TEST(CorpusIo, ImageVectorIsOptional) {
  const auto p = TempPath("noimg.jsonl");
  {
    std::ofstream out(p);
    out << R"({"id":"x","caption":"A cat. A dog."})" << "\n\n";
  }
  const auto c = LoadCorpus(p);
  ASSERT_EQ(c.size(), 1);
  EXPECT_TRUE(c.records[0].image.empty());
  EXPECT_EQ(c.image_dim(), 0);
  fs::remove(p);
}

TEST(CorpusIo, Errors) {
  EXPECT_THROW(LoadCorpus(TempPath("missing.jsonl")), Error);
  const auto p = TempPath("bad.jsonl");
  {
    std::ofstream out(p);
    out << R"({"schema":"other.v9","id":"x","caption":"c"})" << "\n";
  }
  try {
    LoadCorpus(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
  }
  {
    std::ofstream out(p);
    out << "{not json\n";
  }
  EXPECT_THROW(LoadCorpus(p), Error);
  fs::remove(p);
}

TEST(HashBytes, Fnv1aVectors) {
  EXPECT_EQ(HashBytes(""), "cbf29ce484222325");
  EXPECT_EQ(HashBytes("a"), "af63dc4c8601ec8c");
}

}  // namespace
}  // namespace debias
