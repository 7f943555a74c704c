#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "debias/rng.hpp"
#include "debias/text.hpp"

namespace debias {

struct SamplingStrategy {
  enum class Kind {
    kRandom,           // uniform count, uniform subset, uniform order
    kOrdered,          // contiguous block from the first detail sentence
    kIndependent,      // Bernoulli(p) per sentence, redrawn if empty
    kKeepN,            // exactly n sentences (all if fewer), random order
    kShuffle,          // every sentence, permuted
    kLongClipSummary,  // short caption is the summary sentence
    kSmartClipPrefix,  // contiguous block that includes the summary
  };
  Kind kind = Kind::kRandom;
  double p = 0.5;
  int n = 4;

  static SamplingStrategy Random() { return {Kind::kRandom}; }
  static SamplingStrategy Ordered() { return {Kind::kOrdered}; }
  static SamplingStrategy Independent(double p);
  static SamplingStrategy KeepN(int n);
  static SamplingStrategy Shuffle() { return {Kind::kShuffle}; }
  static SamplingStrategy LongClipSummary() { return {Kind::kLongClipSummary}; }
  static SamplingStrategy SmartClipPrefix() { return {Kind::kSmartClipPrefix}; }
};

std::string ToString(const SamplingStrategy& s);
// Accepts random, ordered, independent[:p], keep_n[:n], shuffle, longclip,
// longclip_summary, smartclip, smartclip_prefix and the alias debias (=random).
SamplingStrategy ParseSamplingStrategy(std::string_view text);

struct SummaryRemoval {
  Caption caption;
  // Set for single-sentence captions, which are returned unchanged.
  bool degenerate = false;
};

SummaryRemoval DropSummary(const Caption& c);

Caption SampleSentences(const Caption& c_no_sum, Rng& rng, const SamplingStrategy& strategy);

struct AugmentConfig {
  SamplingStrategy strategy = SamplingStrategy::Random();
  PaddingMode padding = PaddingMode::Random();
  int context_length = 248;
};

struct TrainingPair {
  TokenSequence long_tokens;
  TokenSequence short_tokens;
  Caption short_caption;
  std::vector<double> image;
  bool degenerate = false;
  bool long_truncated = false;
  bool short_truncated = false;
};

TrainingPair BuildTrainingPair(const Caption& c, std::vector<double> image, Rng& rng,
                               const AugmentConfig& cfg, const Vocabulary& vocab);

// Literal sentence used by the padding probe.
inline constexpr std::string_view kPadSentence = "This is a photo.";

// Sentence-level rearrangements used at evaluation time. Indices are 1-based.
struct ProbeStep {
  enum class Kind { kKeep, kMove, kRemoveFirst, kPrependPad, kFirstM, kSwapFirstTwo };
  Kind kind = Kind::kKeep;
  int a = 0;
  int b = 0;
};

struct Probe {
  std::vector<ProbeStep> steps;
  std::string label;

  static Probe Keep();
};

// Grammar: step('+'step)* with steps keep | move:i:j | remove_first |
// pad:n | first:m | swap2.
Probe ParseProbe(std::string_view text);
std::vector<Probe> ParseProbeList(std::string_view comma_separated);

Caption ApplyProbeStep(const Caption& c, const ProbeStep& step);
Caption ProbeTransform(const Caption& c, const Probe& probe);

}  // namespace debias
