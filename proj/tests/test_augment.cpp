#include <algorithm>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "debias/augment.hpp"
#include "debias/corpus.hpp"
#include "debias/error.hpp"
#include "stats.hpp"

namespace debias {
namespace {

Caption Sentences(int k) {
  std::vector<std::string> s;
  for (int i = 1; i <= k; ++i) s.push_back("s" + std::to_string(i) + ".");
  return Caption::FromSentences(s);
}

std::vector<std::string> S(std::initializer_list<const char*> names) {
  std::vector<std::string> out;
  for (auto n : names) out.push_back(n);
  return out;
}

TEST(DropSummary, RemovesFirstSentence) {
  auto r = DropSummary(Sentences(4));
  EXPECT_FALSE(r.degenerate);
  EXPECT_EQ(r.caption.sentences(), S({"s2.", "s3.", "s4."}));
}

TEST(DropSummary, SingleSentenceIsDegenerate) {
  auto r = DropSummary(Sentences(1));
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.caption.sentences(), S({"s1."}));
}

TEST(DropSummary, TwoSentencesLeaveSecond) {
  EXPECT_EQ(DropSummary(Sentences(2)).caption.sentences(), S({"s2."}));
}

TEST(SampleSentences, SingleSentenceIsForced) {
  auto c = Caption::FromSentences({"only."});
  for (auto strat : {SamplingStrategy::Random(), SamplingStrategy::Ordered(), SamplingStrategy::Independent(0.5),
                     SamplingStrategy::KeepN(4), SamplingStrategy::Shuffle()}) {
    Rng rng(2);
    EXPECT_EQ(SampleSentences(c, rng, strat).sentences(), S({"only."}));
  }
}

TEST(SampleSentences, RandomCanEmitReorderedSubset) {
  // [s4, s2] is a legal draw from [s2, s3, s4, s5].
  auto c = Caption::FromSentences({"s2.", "s3.", "s4.", "s5."});
  bool seen = false;
  for (std::uint64_t seed = 0; seed < 2000 && !seen; ++seed) {
    Rng rng(seed);
    seen = SampleSentences(c, rng, SamplingStrategy::Random()).sentences() == S({"s4.", "s2."});
  }
  EXPECT_TRUE(seen);
}

TEST(SampleSentences, RandomCountAndInclusionUniform) {
  auto c = Caption::FromSentences({"s2.", "s3.", "s4.", "s5."});
  std::vector<long> counts(4, 0);
  std::vector<long> inclusion(4, 0);
  std::map<std::string, int> index = {{"s2.", 0}, {"s3.", 1}, {"s4.", 2}, {"s5.", 3}};
  Rng rng(123);
  for (int i = 0; i < 20000; ++i) {
    auto out = SampleSentences(c, rng, SamplingStrategy::Random());
    ++counts[static_cast<size_t>(out.size() - 1)];
    for (const auto& s : out.sentences()) ++inclusion[static_cast<size_t>(index.at(s))];
  }
  EXPECT_GT(testing::ChiSquareUniformP(counts), 0.01);
  EXPECT_GT(testing::ChiSquareUniformP(inclusion), 0.01);
}

TEST(SampleSentences, RandomOrderIsUniformOverPermutations) {
  auto c = Caption::FromSentences({"a.", "b.", "c."});
  std::map<std::vector<std::string>, long> full;
  Rng rng(9);
  for (int i = 0; i < 30000; ++i) {
    auto out = SampleSentences(c, rng, SamplingStrategy::Random());
    if (out.size() == 3) ++full[out.sentences()];
  }
  ASSERT_EQ(full.size(), 6u);
  std::vector<long> counts;
  for (const auto& [k, v] : full) counts.push_back(v);
  EXPECT_GT(testing::ChiSquareUniformP(counts), 0.01);
}

TEST(SampleSentences, RandomNeverDuplicates) {
  auto c = Sentences(6);
  Rng rng(4);
  for (int i = 0; i < 2000; ++i) {
    auto out = SampleSentences(c, rng, SamplingStrategy::Random());
    std::set<std::string> uniq(out.sentences().begin(), out.sentences().end());
    ASSERT_EQ(uniq.size(), out.sentences().size());
  }
}

TEST(SampleSentences, OrderedIsContiguousPrefix) {
  auto c = Sentences(5);
  Rng rng(7);
  std::set<int> lengths;
  for (int i = 0; i < 500; ++i) {
    auto out = SampleSentences(c, rng, SamplingStrategy::Ordered());
    lengths.insert(out.size());
    for (int j = 0; j < out.size(); ++j) ASSERT_EQ(out.sentence(j), c.sentence(j));
  }
  EXPECT_EQ(lengths.size(), 5u);
}

TEST(SampleSentences, IndependentNeverEmptyAndKeepsOrder) {
  auto c = Sentences(3);
  Rng rng(8);
  for (int i = 0; i < 2000; ++i) {
    auto out = SampleSentences(c, rng, SamplingStrategy::Independent(0.1));
    ASSERT_GE(out.size(), 1);
    ASSERT_TRUE(std::is_sorted(out.sentences().begin(), out.sentences().end()));
  }
}

TEST(SampleSentences, KeepNExactWhenAvailable) {
  Rng rng(1);
  EXPECT_EQ(SampleSentences(Sentences(6), rng, SamplingStrategy::KeepN(4)).size(), 4);
  EXPECT_EQ(SampleSentences(Sentences(2), rng, SamplingStrategy::KeepN(4)).size(), 2);
}

TEST(SampleSentences, ShufflePreservesMultiset) {
  auto c = Sentences(5);
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    auto out = SampleSentences(c, rng, SamplingStrategy::Shuffle()).sentences();
    std::sort(out.begin(), out.end());
    ASSERT_EQ(out, c.sentences());
  }
}

TEST(SamplingStrategy, ParseAndValidate) {
  EXPECT_EQ(ParseSamplingStrategy("debias").kind, SamplingStrategy::Kind::kRandom);
  EXPECT_EQ(ParseSamplingStrategy("longclip").kind, SamplingStrategy::Kind::kLongClipSummary);
  EXPECT_DOUBLE_EQ(ParseSamplingStrategy("independent:0.3").p, 0.3);
  EXPECT_EQ(ParseSamplingStrategy("keep_n:4").n, 4);
  EXPECT_THROW(ParseSamplingStrategy("independent:1.5"), Error);
  EXPECT_THROW(ParseSamplingStrategy("keep_n:0"), Error);
  EXPECT_THROW(ParseSamplingStrategy("bogus"), Error);
  for (const char* s : {"random", "ordered", "shuffle", "longclip_summary", "smartclip_prefix"})
    EXPECT_EQ(ToString(ParseSamplingStrategy(s)), s);
}

class TrainingPairTest : public ::testing::Test {
 protected:
  void SetUp() override {
    SyntheticCorpusSpec spec;
    spec.n_samples = 1000;
    Rng rng(21);
    corpus_ = GenerateCorpus(spec, rng);
    std::vector<std::string> texts;
    for (const auto& r : corpus_.records) texts.push_back(r.caption);
    vocab_ = Vocabulary::Build(texts);
  }
  Corpus corpus_;
  Vocabulary vocab_;
};

TEST_F(TrainingPairTest, LongClipShortCaptionIsSummary) {
  AugmentConfig cfg{SamplingStrategy::LongClipSummary(), PaddingMode::None(), 248};
  auto c = Sentences(3);
  Rng rng(0);
  auto pair = BuildTrainingPair(c, {}, rng, cfg, vocab_);
  EXPECT_EQ(pair.short_caption.raw(), "s1.");
  EXPECT_EQ(pair.short_tokens.n_pre, 0);
}

TEST_F(TrainingPairTest, DebiasTwoSentenceCaptionUsesSecond) {
  AugmentConfig cfg;
  auto c = Sentences(2);
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    auto pair = BuildTrainingPair(c, {}, rng, cfg, vocab_);
    EXPECT_EQ(pair.short_caption.raw(), "s2.");
    EXPECT_EQ(pair.short_tokens.Validate(), "");
  }
}

TEST_F(TrainingPairTest, ShortTokensNeverContainSummaryTokens) {
  // Summary tokens are the concept names, which never occur in detail
  // sentences; the generic words (a, photo, of, and, punctuation) are shared.
  AugmentConfig cfg;
  int violations = 0;
  for (size_t i = 0; i < corpus_.records.size(); ++i) {
    const auto c = SplitSentences(corpus_.records[i].caption);
    const auto summary_only = [&] {
      std::set<int> ids;
      for (const auto& t : TextToTokens(c.sentence(0))) ids.insert(vocab_.Id(t));
      for (int j = 1; j < c.size(); ++j)
        for (const auto& t : TextToTokens(c.sentence(j))) ids.erase(vocab_.Id(t));
      return ids;
    }();
    ASSERT_FALSE(summary_only.empty());
    Rng rng(i);
    const auto pair = BuildTrainingPair(c, corpus_.records[i].image, rng, cfg, vocab_);
    ASSERT_FALSE(pair.degenerate);
    for (int id : pair.short_tokens.text_ids())
      if (summary_only.count(id) != 0) ++violations;
  }
  EXPECT_EQ(violations, 0);
}

TEST_F(TrainingPairTest, LongTokensCoverFullCaption) {
  AugmentConfig cfg;
  const auto c = SplitSentences(corpus_.records[0].caption);
  Rng rng(0);
  auto pair = BuildTrainingPair(c, {}, rng, cfg, vocab_);
  EXPECT_EQ(pair.long_tokens.ids, Tokenize(c, vocab_, 248).ids);
}

TEST_F(TrainingPairTest, BitReproducible) {
  AugmentConfig cfg;
  const auto c = SplitSentences(corpus_.records[3].caption);
  Rng a(55);
  Rng b(55);
  auto pa = BuildTrainingPair(c, corpus_.records[3].image, a, cfg, vocab_);
  auto pb = BuildTrainingPair(c, corpus_.records[3].image, b, cfg, vocab_);
  EXPECT_EQ(pa.short_tokens.ids, pb.short_tokens.ids);
  EXPECT_EQ(pa.long_tokens.ids, pb.long_tokens.ids);
  EXPECT_EQ(pa.image, pb.image);
}

TEST_F(TrainingPairTest, SmartClipPrefixIncludesSummary) {
  AugmentConfig cfg{SamplingStrategy::SmartClipPrefix(), PaddingMode::None(), 248};
  auto c = Sentences(5);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(BuildTrainingPair(c, {}, rng, cfg, vocab_).short_caption.sentence(0), "s1.");
}

TEST(Probe, KeepIsIdentity) {
  auto c = Sentences(5);
  EXPECT_EQ(ProbeTransform(c, Probe::Keep()), c);
}

TEST(Probe, MoveOneFour) {
  EXPECT_EQ(ProbeTransform(Sentences(5), ParseProbe("move:1:4")).sentences(), S({"s4.", "s2.", "s3.", "s1.", "s5."}));
}

TEST(Probe, MovePastEndTransposesWithLast) {
  EXPECT_EQ(ProbeTransform(Sentences(3), ParseProbe("move:1:4")).sentences(), S({"s3.", "s2.", "s1."}));
}

TEST(Probe, MoveIsInvolution) {
  auto c = Sentences(6);
  for (int i = 1; i <= 6; ++i)
    for (int j = 1; j <= 8; ++j) {
      auto p = ParseProbe("move:" + std::to_string(i) + ":" + std::to_string(j));
      EXPECT_EQ(ProbeTransform(ProbeTransform(c, p), p), c);
    }
}

TEST(Probe, PadOnFirstTwo) {
  auto c = Caption::FromSentences({"Red car.", "Blue sky.", "Tall tree."});
  EXPECT_EQ(ProbeTransform(c, ParseProbe("first:2+pad:2")).raw(),
            "This is a photo. This is a photo. Red car. Blue sky.");
}

TEST(Probe, RemoveFirstAndSwap) {
  EXPECT_EQ(ProbeTransform(Sentences(3), ParseProbe("remove_first")).sentences(), S({"s2.", "s3."}));
  EXPECT_EQ(ProbeTransform(Sentences(3), ParseProbe("swap2")).sentences(), S({"s2.", "s1.", "s3."}));
}

TEST(Probe, IndexErrors) {
  auto expect_code = [](const Caption& c, const char* probe) {
    try {
      ProbeTransform(c, ParseProbe(probe));
      ADD_FAILURE() << probe;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kIndexOutOfRange) << probe;
    }
  };
  expect_code(Sentences(3), "first:4");
  expect_code(Sentences(3), "first:0");
  expect_code(Sentences(3), "move:4:1");
  expect_code(Sentences(3), "move:0:2");
  expect_code(Sentences(1), "remove_first");
}

TEST(Probe, ParseList) {
  auto probes = ParseProbeList("keep,move:1:4,remove_first,pad:3");
  ASSERT_EQ(probes.size(), 4u);
  EXPECT_EQ(probes[1].label, "move:1:4");
  EXPECT_THROW(ParseProbe("move:1"), Error);
  EXPECT_THROW(ParseProbe("jump"), Error);
}

}  // namespace
}  // namespace debias
