#include "debias/text.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "debias/error.hpp"

namespace debias {
namespace {

bool IsSpace(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool IsWordChar(char c) {
  auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) != 0 || c == '_' || c == '\'' || c == '-' || u >= 0x80;
}

std::string Trim(std::string_view s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && IsSpace(s[b])) ++b;
  while (e > b && IsSpace(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

// Collapses internal whitespace runs to one space.
std::string Squeeze(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : s) {
    if (IsSpace(c)) {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

}  // namespace

Caption Caption::FromSentences(std::vector<std::string> sentences) {
  if (sentences.empty()) throw Error(ErrorCode::kEmptyCaption, "caption has no sentences");
  Caption c;
  for (auto& s : sentences) {
    s = Squeeze(s);
    if (s.empty()) throw Error(ErrorCode::kEmptyCaption, "blank sentence");
    if (!c.raw_.empty()) c.raw_.push_back(' ');
    c.raw_ += s;
  }
  c.sentences_ = std::move(sentences);
  return c;
}

Caption SplitSentences(std::string_view raw) {
  std::string text = Trim(raw);
  if (text.empty()) throw Error(ErrorCode::kEmptyCaption, "caption is blank");

  std::vector<std::string> sentences;
  size_t start = 0;
  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    // Runs like "?!" or "..." terminate once.
    size_t end = i + 1;
    while (end < text.size() && (text[end] == '.' || text[end] == '!' || text[end] == '?')) ++end;
    if (end == text.size() || IsSpace(text[end])) {
      std::string s = Trim(std::string_view(text).substr(start, end - start));
      if (!s.empty()) sentences.push_back(std::move(s));
      start = end;
    }
    i = end - 1;
  }
  std::string tail = Trim(std::string_view(text).substr(start));
  if (!tail.empty()) sentences.push_back(std::move(tail));
  return Caption::FromSentences(std::move(sentences));
}

std::vector<std::string> TextToTokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  for (char c : text) {
    if (IsSpace(c)) {
      flush();
    } else if (IsWordChar(c)) {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      flush();
      tokens.emplace_back(1, c);
    }
  }
  flush();
  return tokens;
}

Vocabulary::Vocabulary() : tokens_{"<pad>", "<sot>", "<eot>", "<unk>"} {
  for (int i = 0; i < kNumReserved; ++i) index_.emplace(tokens_[static_cast<size_t>(i)], i);
}

Vocabulary Vocabulary::Build(std::span<const std::string> texts) {
  std::set<std::string> unique;
  for (const auto& t : texts)
    for (auto& tok : TextToTokens(t)) unique.insert(std::move(tok));
  return FromTokens(std::vector<std::string>(unique.begin(), unique.end()));
}

Vocabulary Vocabulary::FromTokens(std::vector<std::string> tokens) {
  Vocabulary v;
  for (auto& tok : tokens) {
    if (v.index_.count(tok) != 0) throw Error(ErrorCode::kInvalidArgument, "duplicate token '" + tok + "'");
    v.index_.emplace(tok, v.size());
    v.tokens_.push_back(std::move(tok));
  }
  return v;
}

int Vocabulary::Id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::string> Vocabulary::WordTokens() const {
  return {tokens_.begin() + kNumReserved, tokens_.end()};
}

std::string TokenSequence::Validate() const {
  const int ctx = context_length();
  std::ostringstream err;
  if (n_pre < 0 || n_post < 0 || text_len < 0) err << "negative slot count; ";
  if (n_pre + text_len + n_post + 2 != ctx) err << "slot accounting broken; ";
  if (eot_index != n_pre + text_len + 1) err << "eot_index inconsistent; ";
  if (sot_index != (pad_before_sot ? n_pre : 0)) err << "sot_index inconsistent; ";
  if (!err.str().empty()) return err.str();
  if (ids[static_cast<size_t>(sot_index)] != Vocabulary::kSot) err << "SOT missing; ";
  if (ids[static_cast<size_t>(eot_index)] != Vocabulary::kEot) err << "EOT missing; ";
  for (int p = eot_index + 1; p < ctx; ++p)
    if (ids[static_cast<size_t>(p)] != Vocabulary::kPad) {
      err << "non-PAD after EOT at " << p << "; ";
      break;
    }
  const int pre_begin = pad_before_sot ? 0 : 1;
  for (int p = pre_begin; p < pre_begin + n_pre; ++p)
    if (ids[static_cast<size_t>(p)] != Vocabulary::kPad) {
      err << "non-PAD in prefix at " << p << "; ";
      break;
    }
  return err.str();
}

TokenSequence Tokenize(const Caption& caption, const Vocabulary& vocab, int context_length) {
  if (context_length < 3) throw Error(ErrorCode::kInvalidArgument, "context length must be >= 3");
  std::vector<int> text;
  for (const auto& tok : TextToTokens(caption.raw())) text.push_back(vocab.Id(tok));

  TokenSequence seq;
  const int capacity = context_length - 2;
  const int n_text = static_cast<int>(text.size());
  seq.truncated_tokens = std::max(0, n_text - capacity);
  seq.text_len = std::min(n_text, capacity);
  seq.ids.assign(static_cast<size_t>(context_length), Vocabulary::kPad);
  seq.ids[0] = Vocabulary::kSot;
  std::copy_n(text.begin(), seq.text_len, seq.ids.begin() + 1);
  seq.eot_index = seq.text_len + 1;
  seq.ids[static_cast<size_t>(seq.eot_index)] = Vocabulary::kEot;
  seq.n_post = context_length - seq.text_len - 2;
  return seq;
}

std::string Detokenize(const TokenSequence& seq, const Vocabulary& vocab) {
  std::string out;
  for (int id : seq.text_ids()) {
    if (!out.empty()) out.push_back(' ');
    out += vocab.Token(id);
  }
  return out;
}

std::string ToString(const PaddingMode& mode) {
  switch (mode.kind) {
    case PaddingMode::Kind::kNone: return "none";
    case PaddingMode::Kind::kRandom: return "random";
    case PaddingMode::Kind::kFixed: return "fixed:" + std::to_string(mode.fixed);
    case PaddingMode::Kind::kPreSot: return "pre_sot";
  }
  return "none";
}

PaddingMode ParsePaddingMode(std::string_view text) {
  if (text == "none") return PaddingMode::None();
  if (text == "random") return PaddingMode::Random();
  if (text == "pre_sot") return PaddingMode::PreSot();
  if (text.starts_with("fixed:")) {
    try {
      int n = std::stoi(std::string(text.substr(6)));
      if (n >= 0) return PaddingMode::Fixed(n);
    } catch (const std::exception&) {
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown padding mode '" + std::string(text) + "'");
}

TokenSequence RedistributePadding(const TokenSequence& seq, Rng& rng, const PaddingMode& mode) {
  if (seq.n_pre != 0 || seq.pad_before_sot)
    throw Error(ErrorCode::kInvalidArgument, "sequence already carries prefix padding");

  int n_pre = 0;
  switch (mode.kind) {
    case PaddingMode::Kind::kNone: return seq;
    case PaddingMode::Kind::kRandom:
    case PaddingMode::Kind::kPreSot: n_pre = UniformInt(rng, 0, seq.n_post); break;
    case PaddingMode::Kind::kFixed:
      if (mode.fixed > seq.n_post)
        throw Error(ErrorCode::kFixedPadTooLarge, "fixed padding " + std::to_string(mode.fixed) +
                                                      " exceeds " + std::to_string(seq.n_post) + " free slots");
      n_pre = mode.fixed;
      break;
  }

  TokenSequence out = seq;
  out.n_pre = n_pre;
  out.n_post = seq.n_post - n_pre;
  out.pad_before_sot = mode.kind == PaddingMode::Kind::kPreSot;
  out.sot_index = out.pad_before_sot ? n_pre : 0;
  out.eot_index = seq.eot_index + n_pre;
  std::fill(out.ids.begin(), out.ids.end(), Vocabulary::kPad);
  out.ids[static_cast<size_t>(out.sot_index)] = Vocabulary::kSot;
  auto text = seq.text_ids();
  std::copy(text.begin(), text.end(), out.ids.begin() + out.first_text_index());
  out.ids[static_cast<size_t>(out.eot_index)] = Vocabulary::kEot;
  return out;
}

}  // namespace debias
