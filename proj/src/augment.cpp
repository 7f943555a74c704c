#include "debias/augment.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "debias/error.hpp"

namespace debias {
namespace {

std::vector<int> Permutation(int k, Rng& rng) {
  std::vector<int> idx(static_cast<size_t>(k));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

Caption Pick(const Caption& c, const std::vector<int>& idx) {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(c.sentence(i));
  return Caption::FromSentences(std::move(out));
}

Caption Prefix(const Caption& c, int count) {
  std::vector<int> idx(static_cast<size_t>(count));
  std::iota(idx.begin(), idx.end(), 0);
  return Pick(c, idx);
}

int ParseInt(std::string_view s, std::string_view what) {
  try {
    size_t used = 0;
    int v = std::stoi(std::string(s), &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kInvalidArgument, "bad integer for " + std::string(what) + ": '" + std::string(s) + "'");
}

std::vector<std::string_view> SplitOn(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  size_t start = 0;
  while (true) {
    size_t pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

}  // namespace

SamplingStrategy SamplingStrategy::Independent(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::kInvalidArgument, "independent p must lie in (0,1)");
  return {Kind::kIndependent, p, 4};
}

SamplingStrategy SamplingStrategy::KeepN(int n) {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "keep_n requires n >= 1");
  return {Kind::kKeepN, 0.5, n};
}

std::string ToString(const SamplingStrategy& s) {
  using K = SamplingStrategy::Kind;
  switch (s.kind) {
    case K::kRandom: return "random";
    case K::kOrdered: return "ordered";
    case K::kIndependent: {
      std::ostringstream os;
      os << "independent:" << s.p;
      return os.str();
    }
    case K::kKeepN: return "keep_n:" + std::to_string(s.n);
    case K::kShuffle: return "shuffle";
    case K::kLongClipSummary: return "longclip_summary";
    case K::kSmartClipPrefix: return "smartclip_prefix";
  }
  return "random";
}

SamplingStrategy ParseSamplingStrategy(std::string_view text) {
  auto parts = SplitOn(text, ':');
  std::string_view name = parts[0];
  if (parts.size() > 2) throw Error(ErrorCode::kInvalidArgument, "bad strategy '" + std::string(text) + "'");
  if (name == "random" || name == "debias") return SamplingStrategy::Random();
  if (name == "ordered") return SamplingStrategy::Ordered();
  if (name == "shuffle") return SamplingStrategy::Shuffle();
  if (name == "longclip" || name == "longclip_summary") return SamplingStrategy::LongClipSummary();
  if (name == "smartclip" || name == "smartclip_prefix") return SamplingStrategy::SmartClipPrefix();
  if (name == "independent") {
    double p = 0.5;
    if (parts.size() == 2) {
      try {
        p = std::stod(std::string(parts[1]));
      } catch (const std::exception&) {
        throw Error(ErrorCode::kInvalidArgument, "bad probability in '" + std::string(text) + "'");
      }
    }
    return SamplingStrategy::Independent(p);
  }
  if (name == "keep_n") return SamplingStrategy::KeepN(parts.size() == 2 ? ParseInt(parts[1], "keep_n") : 4);
  throw Error(ErrorCode::kInvalidArgument, "unknown strategy '" + std::string(text) + "'");
}

SummaryRemoval DropSummary(const Caption& c) {
  if (c.size() == 1) return {c, true};
  std::vector<std::string> rest(c.sentences().begin() + 1, c.sentences().end());
  return {Caption::FromSentences(std::move(rest)), false};
}

Caption SampleSentences(const Caption& c, Rng& rng, const SamplingStrategy& strategy) {
  using K = SamplingStrategy::Kind;
  const int k = c.size();
  if (k < 1) throw Error(ErrorCode::kEmptyCaption, "nothing to sample from");

  switch (strategy.kind) {
    case K::kRandom: {
      const int count = UniformInt(rng, 1, k);
      auto idx = Permutation(k, rng);
      idx.resize(static_cast<size_t>(count));
      return Pick(c, idx);
    }
    case K::kOrdered:
    case K::kSmartClipPrefix: return Prefix(c, UniformInt(rng, 1, k));
    case K::kIndependent: {
      std::bernoulli_distribution keep(strategy.p);
      std::vector<int> idx;
      while (idx.empty())
        for (int i = 0; i < k; ++i)
          if (keep(rng)) idx.push_back(i);
      return Pick(c, idx);
    }
    case K::kKeepN: {
      auto idx = Permutation(k, rng);
      idx.resize(static_cast<size_t>(std::min(k, strategy.n)));
      return Pick(c, idx);
    }
    case K::kShuffle: return Pick(c, Permutation(k, rng));
    case K::kLongClipSummary: return Prefix(c, 1);
  }
  return c;
}

TrainingPair BuildTrainingPair(const Caption& c, std::vector<double> image, Rng& rng, const AugmentConfig& cfg,
                               const Vocabulary& vocab) {
  using K = SamplingStrategy::Kind;
  TrainingPair pair;
  pair.image = std::move(image);
  pair.long_tokens = Tokenize(c, vocab, cfg.context_length);
  pair.long_truncated = pair.long_tokens.truncated_tokens > 0;

  if (cfg.strategy.kind == K::kLongClipSummary) {
    pair.short_caption = Prefix(c, 1);
    pair.short_tokens = Tokenize(pair.short_caption, vocab, cfg.context_length);
  } else {
    if (cfg.strategy.kind == K::kSmartClipPrefix) {
      pair.short_caption = SampleSentences(c, rng, cfg.strategy);
    } else {
      auto removal = DropSummary(c);
      pair.degenerate = removal.degenerate;
      pair.short_caption = SampleSentences(removal.caption, rng, cfg.strategy);
    }
    pair.short_tokens =
        RedistributePadding(Tokenize(pair.short_caption, vocab, cfg.context_length), rng, cfg.padding);
  }
  pair.short_truncated = pair.short_tokens.truncated_tokens > 0;
  return pair;
}

Probe Probe::Keep() { return {{ProbeStep{}}, "keep"}; }

Probe ParseProbe(std::string_view text) {
  using K = ProbeStep::Kind;
  Probe probe;
  probe.label = std::string(text);
  for (auto step_text : SplitOn(text, '+')) {
    auto parts = SplitOn(step_text, ':');
    std::string_view name = parts[0];
    auto want = [&](size_t n) {
      if (parts.size() != n) throw Error(ErrorCode::kInvalidArgument, "bad probe '" + std::string(step_text) + "'");
    };
    ProbeStep step;
    if (name == "keep") {
      want(1);
      step.kind = K::kKeep;
    } else if (name == "move") {
      want(3);
      step = {K::kMove, ParseInt(parts[1], "move"), ParseInt(parts[2], "move")};
    } else if (name == "remove_first" || name == "remove") {
      want(1);
      step.kind = K::kRemoveFirst;
    } else if (name == "pad") {
      want(2);
      step = {K::kPrependPad, ParseInt(parts[1], "pad"), 0};
    } else if (name == "first") {
      want(2);
      step = {K::kFirstM, ParseInt(parts[1], "first"), 0};
    } else if (name == "swap2" || name == "swap_first_two") {
      want(1);
      step.kind = K::kSwapFirstTwo;
    } else {
      throw Error(ErrorCode::kInvalidArgument, "unknown probe '" + std::string(step_text) + "'");
    }
    probe.steps.push_back(step);
  }
  return probe;
}

std::vector<Probe> ParseProbeList(std::string_view comma_separated) {
  std::vector<Probe> probes;
  for (auto part : SplitOn(comma_separated, ','))
    if (!part.empty()) probes.push_back(ParseProbe(part));
  return probes;
}

Caption ApplyProbeStep(const Caption& c, const ProbeStep& step) {
  using K = ProbeStep::Kind;
  const int k = c.size();
  std::vector<std::string> s = c.sentences();
  switch (step.kind) {
    case K::kKeep: return c;
    case K::kSwapFirstTwo:
    case K::kMove: {
      int i = step.kind == K::kMove ? step.a : 1;
      int j = step.kind == K::kMove ? step.b : 2;
      if (i < 1 || i > k || j < 1)
        throw Error(ErrorCode::kIndexOutOfRange, "move indices out of range for " + std::to_string(k) + " sentences");
      // Short captions transpose with the last sentence instead.
      j = std::min(j, k);
      std::swap(s[static_cast<size_t>(i - 1)], s[static_cast<size_t>(j - 1)]);
      return Caption::FromSentences(std::move(s));
    }
    case K::kRemoveFirst:
      if (k < 2) throw Error(ErrorCode::kIndexOutOfRange, "cannot remove the only sentence");
      s.erase(s.begin());
      return Caption::FromSentences(std::move(s));
    case K::kPrependPad: {
      if (step.a < 0) throw Error(ErrorCode::kIndexOutOfRange, "negative pad count");
      std::vector<std::string> out(static_cast<size_t>(step.a), std::string(kPadSentence));
      out.insert(out.end(), s.begin(), s.end());
      return Caption::FromSentences(std::move(out));
    }
    case K::kFirstM:
      if (step.a < 1 || step.a > k)
        throw Error(ErrorCode::kIndexOutOfRange, "first:" + std::to_string(step.a) + " on " + std::to_string(k) + " sentences");
      s.resize(static_cast<size_t>(step.a));
      return Caption::FromSentences(std::move(s));
  }
  return c;
}

Caption ProbeTransform(const Caption& c, const Probe& probe) {
  Caption out = c;
  for (const auto& step : probe.steps) out = ApplyProbeStep(out, step);
  return out;
}

}  // namespace debias
