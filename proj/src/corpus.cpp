#include "debias/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "debias/error.hpp"

namespace debias {
namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

// Distinct pronounceable word per index; `syllables` fixes the length so
// families of different lengths never collide.
std::string PseudoWord(int index, int syllables) {
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w.push_back(kConsonants[static_cast<size_t>(index % 14)]);
    index /= 14;
    w.push_back(kVowels[static_cast<size_t>(index % 5)]);
    index /= 5;
  }
  return w;
}

const std::vector<std::string>& DistractorWords() {
  static const std::vector<std::string> words = {
      "bright", "small", "old",    "soft",  "near",  "dark",  "large", "quiet",  "smooth", "plain",  "worn",   "clean",
      "warm",   "cold",  "narrow", "round", "flat",  "tall",  "faint", "rough",  "heavy",  "light",  "calm",   "still"};
  return words;
}

template <typename T>
const T& Choose(const std::vector<T>& v, Rng& rng) {
  return v[static_cast<size_t>(UniformInt(rng, 0, static_cast<int>(v.size()) - 1))];
}

std::string JoinList(const std::vector<std::string>& items) {
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += (i + 1 == items.size()) ? " and " : ", ";
    out += items[i];
  }
  return out;
}

std::string Capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

std::string SummarySentence(const std::vector<int>& concepts, const ConceptLexicon& lex,
                            SyntheticCorpusSpec::SummaryMode mode, Rng& rng) {
  std::vector<std::string> parts;
  for (int c : concepts) {
    const auto& names = lex.names[static_cast<size_t>(c)];
    const std::string& name = mode == SyntheticCorpusSpec::SummaryMode::kUnion ? names[0] : Choose(names, rng);
    parts.push_back("a " + name);
  }
  std::string lead = "a photo of ";
  if (mode == SyntheticCorpusSpec::SummaryMode::kParaphraseLite) {
    static const std::vector<std::string> leads = {"a photo of ", "an image showing ", "a picture with "};
    lead = Choose(leads, rng);
  }
  return Capitalize(lead + JoinList(parts) + ".");
}

std::string DetailSentence(int concept_id, const ConceptLexicon& lex, Rng& rng) {
  const std::string& word = Choose(lex.detail_words[static_cast<size_t>(concept_id)], rng);
  const std::string& x = Choose(lex.distractors, rng);
  const std::string& y = Choose(lex.distractors, rng);
  switch (UniformInt(rng, 0, 2)) {
    case 0: return "The " + word + " looks " + x + " and " + y + ".";
    case 1: return "There is a " + x + " " + word + " that is " + y + ".";
    default: return "Its " + word + " seems " + x + ".";
  }
}

}  // namespace

int Corpus::image_dim() const {
  for (const auto& r : records)
    if (!r.image.empty()) return static_cast<int>(r.image.size());
  return 0;
}

void SyntheticCorpusSpec::Validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kSpecInvalid, msg); };
  if (n_samples < 1) fail("n_samples must be >= 1");
  if (concepts_per_image < 1) fail("concepts_per_image must be >= 1");
  if (min_sentences < 2) fail("captions need a summary plus at least one detail sentence (sentences >= 2)");
  if (max_sentences < min_sentences) fail("max_sentences < min_sentences");
  if (min_sentences - 1 < concepts_per_image)
    fail("every concept needs a detail sentence: min_sentences must be >= concepts_per_image + 1");
  if (vocab_size < concepts_per_image) fail("concept pool smaller than concepts_per_image");
  if (vocab_size > 4900) fail("concept pool too large");
  if (detail_words_per_concept < 1) fail("detail_words_per_concept must be >= 1");
  if (image_noise_sigma < 0.0) fail("image_noise_sigma must be >= 0");
  if (image_dim < 1) fail("image_dim must be >= 1");
}

std::string ToString(SyntheticCorpusSpec::SummaryMode m) {
  return m == SyntheticCorpusSpec::SummaryMode::kUnion ? "union" : "paraphrase-lite";
}

SyntheticCorpusSpec::SummaryMode ParseSummaryMode(std::string_view text) {
  if (text == "union") return SyntheticCorpusSpec::SummaryMode::kUnion;
  if (text == "paraphrase-lite" || text == "paraphrase_lite") return SyntheticCorpusSpec::SummaryMode::kParaphraseLite;
  throw Error(ErrorCode::kSpecInvalid, "unknown summary mode '" + std::string(text) + "'");
}

ConceptLexicon MakeLexicon(const SyntheticCorpusSpec& spec) {
  ConceptLexicon lex;
  lex.names.resize(static_cast<size_t>(spec.vocab_size));
  lex.detail_words.resize(static_cast<size_t>(spec.vocab_size));
  for (int c = 0; c < spec.vocab_size; ++c) {
    auto& names = lex.names[static_cast<size_t>(c)];
    names.push_back(PseudoWord(c, 2));
    if (spec.summary_mode == SyntheticCorpusSpec::SummaryMode::kParaphraseLite) names.push_back(PseudoWord(c, 2) + "n");
    for (int w = 0; w < spec.detail_words_per_concept; ++w)
      lex.detail_words[static_cast<size_t>(c)].push_back(PseudoWord(c * spec.detail_words_per_concept + w, 3));
  }
  lex.distractors = DistractorWords();
  return lex;
}

Corpus GenerateCorpus(const SyntheticCorpusSpec& spec, Rng& rng) {
  spec.Validate();
  const ConceptLexicon lex = MakeLexicon(spec);

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> basis(static_cast<size_t>(spec.vocab_size));
  for (auto& b : basis) {
    b.resize(static_cast<size_t>(spec.image_dim));
    double norm = 0.0;
    for (auto& x : b) {
      x = normal(rng);
      norm += x * x;
    }
    for (auto& x : b) x /= std::sqrt(norm);
  }

  // Distinct concept sets keep retrieval well posed; after a bounded number of
  // redraws a repeat is accepted (tiny pools).
  std::set<std::vector<int>> seen;
  std::vector<int> pool(static_cast<size_t>(spec.vocab_size));
  std::iota(pool.begin(), pool.end(), 0);

  Corpus corpus;
  corpus.records.reserve(static_cast<size_t>(spec.n_samples));
  for (int i = 0; i < spec.n_samples; ++i) {
    std::vector<int> concepts;
    for (int attempt = 0; attempt < 64; ++attempt) {
      std::shuffle(pool.begin(), pool.end(), rng);
      concepts.assign(pool.begin(), pool.begin() + spec.concepts_per_image);
      auto key = concepts;
      std::sort(key.begin(), key.end());
      if (seen.insert(key).second) break;
    }

    const int k = UniformInt(rng, spec.min_sentences, spec.max_sentences);
    std::vector<std::string> sentences{SummarySentence(concepts, lex, spec.summary_mode, rng)};
    std::vector<int> subjects;
    std::vector<int> order = concepts;
    std::shuffle(order.begin(), order.end(), rng);
    for (int s = 0; s < k - 1; ++s) subjects.push_back(order[static_cast<size_t>(s) % order.size()]);
    std::shuffle(subjects.begin(), subjects.end(), rng);
    for (int c : subjects) sentences.push_back(DetailSentence(c, lex, rng));

    CorpusRecord rec;
    std::ostringstream id;
    id << "syn-" << i;
    rec.id = id.str();
    for (const auto& s : sentences) rec.caption += (rec.caption.empty() ? "" : " ") + s;
    rec.image.assign(static_cast<size_t>(spec.image_dim), 0.0);
    auto sorted = concepts;
    std::sort(sorted.begin(), sorted.end());
    for (int c : sorted)
      for (size_t d = 0; d < rec.image.size(); ++d) rec.image[d] += basis[static_cast<size_t>(c)][d];
    if (spec.image_noise_sigma > 0.0)
      for (auto& x : rec.image) x += spec.image_noise_sigma * normal(rng);
    rec.concepts = concepts;
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

void SaveCorpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& r : corpus.records) {
    nlohmann::json j;
    j["schema"] = kCorpusSchema;
    j["id"] = r.id;
    j["caption"] = r.caption;
    if (!r.image.empty()) j["image_vector"] = r.image;
    if (!r.concepts.empty()) j["concepts"] = r.concepts;
    out << j.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

Corpus LoadCorpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  Corpus corpus;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (j.contains("schema") && j["schema"] != kCorpusSchema)
        throw Error(ErrorCode::kParse, "unsupported schema " + j["schema"].dump());
      CorpusRecord r;
      r.id = j.at("id").get<std::string>();
      r.caption = j.at("caption").get<std::string>();
      if (j.contains("image_vector")) r.image = j["image_vector"].get<std::vector<double>>();
      if (j.contains("concepts")) r.concepts = j["concepts"].get<std::vector<int>>();
      corpus.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

std::string HashBytes(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

std::string HashFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return HashBytes(ss.str());
}

}  // namespace debias
