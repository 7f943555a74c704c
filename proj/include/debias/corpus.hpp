#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "debias/rng.hpp"

namespace debias {

inline constexpr std::string_view kCorpusSchema = "debias.corpus.v1";

struct CorpusRecord {
  std::string id;
  std::string caption;
  std::vector<double> image;  // empty when the record carries no image
  std::vector<int> concepts;  // generator ground truth, optional
};

struct Corpus {
  std::vector<CorpusRecord> records;

  int size() const { return static_cast<int>(records.size()); }
  int image_dim() const;
};

struct SyntheticCorpusSpec {
  enum class SummaryMode { kUnion, kParaphraseLite };

  int n_samples = 2000;
  int concepts_per_image = 3;
  int min_sentences = 4;
  int max_sentences = 6;
  // Size of the concept pool; each concept owns one summary name (two in
  // paraphrase-lite mode) and detail_words_per_concept private detail words.
  int vocab_size = 48;
  int detail_words_per_concept = 3;
  SummaryMode summary_mode = SummaryMode::kUnion;
  double image_noise_sigma = 0.1;
  int image_dim = 64;

  void Validate() const;
};

std::string ToString(SyntheticCorpusSpec::SummaryMode m);
SyntheticCorpusSpec::SummaryMode ParseSummaryMode(std::string_view text);

// Word families used by the generator. Deterministic in the spec alone.
struct ConceptLexicon {
  std::vector<std::vector<std::string>> names;         // per concept
  std::vector<std::vector<std::string>> detail_words;  // per concept
  std::vector<std::string> distractors;                // shared, uninformative
};

ConceptLexicon MakeLexicon(const SyntheticCorpusSpec& spec);

// Summary-first captions: sentence 1 names every concept of the record,
// sentences 2..k each describe exactly one concept through its private detail
// words. Images are the sum of the concepts' unit basis vectors plus
// isotropic Gaussian noise.
Corpus GenerateCorpus(const SyntheticCorpusSpec& spec, Rng& rng);

void SaveCorpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus LoadCorpus(const std::filesystem::path& path);

// FNV-1a 64 of a file's bytes, as 16 hex digits.
std::string HashFile(const std::filesystem::path& path);
std::string HashBytes(std::string_view bytes);

}  // namespace debias
