#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "debias/rng.hpp"

namespace debias {

// A caption and its ordered sentence decomposition [s_1, ..., s_k].
class Caption {
 public:
  Caption() = default;

  // Joins sentences with a single space. Throws EmptyCaption when the list is
  // empty or any sentence is blank.
  static Caption FromSentences(std::vector<std::string> sentences);

  const std::string& raw() const { return raw_; }
  const std::vector<std::string>& sentences() const { return sentences_; }
  int size() const { return static_cast<int>(sentences_.size()); }
  const std::string& sentence(int i) const { return sentences_.at(static_cast<size_t>(i)); }

  bool operator==(const Caption& other) const { return sentences_ == other.sentences_; }

 private:
  std::string raw_;
  std::vector<std::string> sentences_;
};

// Splits on '.', '!' or '?' followed by whitespace or end of text. Terminal
// punctuation stays with its sentence.
Caption SplitSentences(std::string_view raw);

// Lowercased word/punctuation tokens of a piece of text.
std::vector<std::string> TextToTokens(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSot = 1;
  static constexpr int kEot = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumReserved = 4;

  Vocabulary();

  // Tokens are collected from every text and assigned ids in sorted order, so
  // the result does not depend on input order.
  static Vocabulary Build(std::span<const std::string> texts);
  static Vocabulary FromTokens(std::vector<std::string> tokens);

  int Id(std::string_view token) const;
  const std::string& Token(int id) const { return tokens_.at(static_cast<size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  // Non-reserved tokens in id order.
  std::vector<std::string> WordTokens() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Fixed-length id vector with SOT/EOT/PAD bookkeeping.
//
// Default layout:  [SOT, PAD x n_pre, t_1..t_n, EOT, PAD x n_post]
// Pre-SOT layout:  [PAD x n_pre, SOT, t_1..t_n, EOT, PAD x n_post]
// In both cases eot_index == n_pre + text_len + 1.
struct TokenSequence {
  std::vector<int> ids;
  int sot_index = 0;
  int eot_index = 0;
  int n_pre = 0;
  int n_post = 0;
  int text_len = 0;
  bool pad_before_sot = false;
  // Caption tokens dropped because the caption did not fit.
  int truncated_tokens = 0;

  int context_length() const { return static_cast<int>(ids.size()); }
  int first_text_index() const { return pad_before_sot ? sot_index + 1 : sot_index + 1 + n_pre; }
  std::span<const int> text_ids() const {
    return std::span<const int>(ids).subspan(static_cast<size_t>(first_text_index()),
                                             static_cast<size_t>(text_len));
  }
  // Checks length, slot accounting, special-token placement and PAD-tail
  // purity. Returns an empty string when valid, otherwise the violation.
  std::string Validate() const;
};

// [SOT, tokens..., EOT, PAD...]; overlong text is truncated to ctx - 2 tokens.
TokenSequence Tokenize(const Caption& caption, const Vocabulary& vocab, int context_length);

// Caption tokens joined by single spaces (specials and PAD removed).
std::string Detokenize(const TokenSequence& seq, const Vocabulary& vocab);

struct PaddingMode {
  enum class Kind { kNone, kRandom, kFixed, kPreSot };
  Kind kind = Kind::kRandom;
  int fixed = 0;

  static PaddingMode None() { return {Kind::kNone, 0}; }
  static PaddingMode Random() { return {Kind::kRandom, 0}; }
  static PaddingMode Fixed(int n) { return {Kind::kFixed, n}; }
  static PaddingMode PreSot() { return {Kind::kPreSot, 0}; }
};

std::string ToString(const PaddingMode& mode);
PaddingMode ParsePaddingMode(std::string_view text);

// Moves n_pre of the trailing PAD slots in front of the caption tokens
// (after SOT, or before it for kPreSot). Requires seq.n_pre == 0.
TokenSequence RedistributePadding(const TokenSequence& seq, Rng& rng, const PaddingMode& mode);

}  // namespace debias
