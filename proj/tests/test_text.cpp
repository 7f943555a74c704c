#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "debias/corpus.hpp"
#include "debias/error.hpp"
#include "debias/text.hpp"
#include "stats.hpp"

namespace debias {
namespace {

Vocabulary WordsVocab() {
  std::vector<std::string> texts = {"a cat . a dog . the red fox jumps"};
  return Vocabulary::Build(texts);
}

TEST(SplitSentences, TwoTerminalPeriods) {
  auto c = SplitSentences("A cat. A dog.");
  ASSERT_EQ(c.size(), 2);
  EXPECT_EQ(c.sentence(0), "A cat.");
  EXPECT_EQ(c.sentence(1), "A dog.");
}

TEST(SplitSentences, NoTerminatorIsOneSentence) {
  auto c = SplitSentences("Hello world");
  ASSERT_EQ(c.size(), 1);
  EXPECT_EQ(c.sentence(0), "Hello world");
}

TEST(SplitSentences, SummaryIsFirstElement) {
  auto c = SplitSentences(
      "A high angle view of an old faded street corner. In the middle of the view is the orange spray painted word.");
  EXPECT_EQ(c.sentence(0), "A high angle view of an old faded street corner.");
}

TEST(SplitSentences, MixedTerminatorsAndInternalDots) {
  auto c = SplitSentences("Is it red?  Yes!\nIt costs 3.5 units... Done");
  ASSERT_EQ(c.size(), 4);
  EXPECT_EQ(c.sentence(0), "Is it red?");
  EXPECT_EQ(c.sentence(1), "Yes!");
  EXPECT_EQ(c.sentence(2), "It costs 3.5 units...");
  EXPECT_EQ(c.sentence(3), "Done");
}

TEST(SplitSentences, BlankThrows) {
  try {
    SplitSentences("  \n\t ");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyCaption);
  }
}

TEST(SplitSentences, RawRoundTripsUpToWhitespace) {
  auto c = SplitSentences("  One.   Two  words!\n\nThree ");
  EXPECT_EQ(c.raw(), "One. Two words! Three");
  auto re = SplitSentences(c.raw());
  EXPECT_EQ(re, c);
}

TEST(Caption, FromSentencesRejectsEmpty) {
  EXPECT_THROW(Caption::FromSentences({}), Error);
  EXPECT_THROW(Caption::FromSentences({"ok.", "   "}), Error);
}

TEST(Vocabulary, ReservedIdsDistinctAndStable) {
  Vocabulary v;
  EXPECT_EQ(v.size(), Vocabulary::kNumReserved);
  std::vector<int> ids = {Vocabulary::kPad, Vocabulary::kSot, Vocabulary::kEot, Vocabulary::kUnk};
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(std::unique(ids.begin(), ids.end()), ids.end());
}

TEST(Vocabulary, InjectiveAndOrderIndependent) {
  std::vector<std::string> a = {"b a c.", "d!"};
  std::vector<std::string> b = {"d!", "c a b."};
  auto va = Vocabulary::Build(a);
  auto vb = Vocabulary::Build(b);
  EXPECT_EQ(va.WordTokens(), vb.WordTokens());
  for (int id = 0; id < va.size(); ++id) EXPECT_EQ(va.Id(va.Token(id)), id);
  EXPECT_EQ(va.Id("zebra"), Vocabulary::kUnk);
}

TEST(Vocabulary, DuplicateTokensRejected) {
  EXPECT_THROW(Vocabulary::FromTokens({"x", "x"}), Error);
}

TEST(Tokenize, MinimalLayout) {
  auto vocab = WordsVocab();
  auto seq = Tokenize(SplitSentences("cat"), vocab, 4);
  EXPECT_EQ(seq.ids, (std::vector<int>{Vocabulary::kSot, vocab.Id("cat"), Vocabulary::kEot, Vocabulary::kPad}));
  EXPECT_EQ(seq.eot_index, 2);
  EXPECT_EQ(seq.n_post, 1);
  EXPECT_EQ(seq.Validate(), "");
}

TEST(Tokenize, ExactFillLeavesNoPostPad) {
  auto vocab = WordsVocab();
  auto seq = Tokenize(SplitSentences("a red fox"), vocab, 5);
  EXPECT_EQ(seq.n_post, 0);
  EXPECT_EQ(seq.truncated_tokens, 0);
  EXPECT_EQ(seq.ids.back(), Vocabulary::kEot);
  EXPECT_EQ(seq.Validate(), "");
}

TEST(Tokenize, TruncationKeepsEot) {
  auto vocab = WordsVocab();
  auto seq = Tokenize(SplitSentences("the red fox jumps."), vocab, 4);
  EXPECT_EQ(seq.text_len, 2);
  EXPECT_EQ(seq.truncated_tokens, 3);
  EXPECT_EQ(seq.ids[3], Vocabulary::kEot);
  EXPECT_EQ(seq.Validate(), "");
}

TEST(Tokenize, Deterministic) {
  auto vocab = WordsVocab();
  auto c = SplitSentences("A cat. A dog.");
  EXPECT_EQ(Tokenize(c, vocab, 16).ids, Tokenize(c, vocab, 16).ids);
}

TEST(Tokenize, RoundTripOverTenThousandCaptions) {
  SyntheticCorpusSpec spec;
  spec.n_samples = 10000;
  Rng rng(3);
  const auto corpus = GenerateCorpus(spec, rng);
  std::vector<std::string> texts;
  for (const auto& r : corpus.records) texts.push_back(r.caption);
  const auto vocab = Vocabulary::Build(texts);
  int failures = 0;
  for (const auto& r : corpus.records) {
    const auto seq = Tokenize(SplitSentences(r.caption), vocab, 248);
    if (!seq.Validate().empty()) ++failures;
    std::string expected;
    for (const auto& t : TextToTokens(r.caption)) expected += (expected.empty() ? "" : " ") + t;
    if (Detokenize(seq, vocab) != expected) ++failures;
  }
  EXPECT_EQ(failures, 0);
}

TokenSequence SampleSequence(const Vocabulary& vocab, int ctx) {
  return Tokenize(SplitSentences("the red fox. a cat."), vocab, ctx);
}

TEST(RedistributePadding, NoPostPadIsIdentity) {
  auto vocab = WordsVocab();
  auto seq = Tokenize(SplitSentences("a red fox"), vocab, 5);
  Rng rng(1);
  auto out = RedistributePadding(seq, rng, PaddingMode::Random());
  EXPECT_EQ(out.ids, seq.ids);
  EXPECT_EQ(out.n_pre, 0);
}

TEST(RedistributePadding, TargetLayout) {
  // [SOT, PAD, PAD, tokens..., EOT, PAD]
  auto vocab = WordsVocab();
  auto seq = Tokenize(SplitSentences("fox cat"), vocab, 7);
  Rng rng(1);
  auto out = RedistributePadding(seq, rng, PaddingMode::Fixed(2));
  const int P = Vocabulary::kPad;
  EXPECT_EQ(out.ids, (std::vector<int>{Vocabulary::kSot, P, P, vocab.Id("fox"), vocab.Id("cat"), Vocabulary::kEot, P}));
  EXPECT_EQ(out.n_pre, 2);
  EXPECT_EQ(out.n_post, 1);
  EXPECT_EQ(out.eot_index, 5);
  EXPECT_EQ(out.Validate(), "");
}

TEST(RedistributePadding, PreSotPlacesPadBeforeSot) {
  auto vocab = WordsVocab();
  auto seq = SampleSequence(vocab, 16);
  for (int s = 0; s < 50; ++s) {
    Rng rng(static_cast<std::uint64_t>(s));
    auto out = RedistributePadding(seq, rng, PaddingMode::PreSot());
    EXPECT_TRUE(out.pad_before_sot);
    EXPECT_EQ(out.sot_index, out.n_pre);
    for (int p = 0; p < out.n_pre; ++p) EXPECT_EQ(out.ids[static_cast<size_t>(p)], Vocabulary::kPad);
    EXPECT_EQ(out.Validate(), "");
    EXPECT_TRUE(std::equal(out.text_ids().begin(), out.text_ids().end(), seq.text_ids().begin()));
  }
}

TEST(RedistributePadding, FixedTooLargeThrows) {
  auto vocab = WordsVocab();
  auto seq = SampleSequence(vocab, 10);
  Rng rng(0);
  try {
    RedistributePadding(seq, rng, PaddingMode::Fixed(seq.n_post + 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFixedPadTooLarge);
  }
}

TEST(RedistributePadding, NoneLeavesSequence) {
  auto vocab = WordsVocab();
  auto seq = SampleSequence(vocab, 12);
  Rng rng(0);
  EXPECT_EQ(RedistributePadding(seq, rng, PaddingMode::None()).ids, seq.ids);
}

TEST(RedistributePadding, RandomNPreIsUniform) {
  auto vocab = WordsVocab();
  auto seq = Tokenize(SplitSentences("fox cat"), vocab, 12);
  ASSERT_EQ(seq.n_post, 8);
  std::vector<long> counts(9, 0);
  Rng rng(11);
  for (int i = 0; i < 10000; ++i) ++counts[static_cast<size_t>(RedistributePadding(seq, rng, PaddingMode::Random()).n_pre)];
  EXPECT_GT(testing::ChiSquareUniformP(counts), 0.01);
}

TEST(RedistributePadding, PreservesTextOrderAndMultiset) {
  auto vocab = WordsVocab();
  auto seq = SampleSequence(vocab, 20);
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    auto out = RedistributePadding(seq, rng, PaddingMode::Random());
    ASSERT_EQ(out.Validate(), "");
    ASSERT_EQ(out.context_length(), seq.context_length());
    ASSERT_TRUE(std::equal(out.text_ids().begin(), out.text_ids().end(), seq.text_ids().begin()));
  }
}

TEST(PaddingMode, ParseRoundTrip) {
  for (const char* s : {"none", "random", "fixed:20", "pre_sot"}) EXPECT_EQ(ToString(ParsePaddingMode(s)), s);
  EXPECT_THROW(ParsePaddingMode("fixed:x"), Error);
  EXPECT_THROW(ParsePaddingMode("sideways"), Error);
}

}  // namespace
}  // namespace debias
