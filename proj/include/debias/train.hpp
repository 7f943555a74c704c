#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "debias/augment.hpp"
#include "debias/corpus.hpp"
#include "debias/encoder.hpp"
#include "debias/objective.hpp"

namespace debias {

enum class TrainMode { kLongClipBaseline, kDebias, kCustom };

std::string ToString(TrainMode m);
TrainMode ParseTrainMode(std::string_view text);

struct TrainConfig {
  int epochs = 3;
  int batch_size = 32;
  int warmup_iters = 20;
  double learning_rate = 3e-4;
  double weight_decay = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kDebias;

  AugmentConfig augment;
  LossConfig loss;
  TextEncoderConfig text;
  ImageEncoderConfig image;

  // From-scratch toy training (the default).
  static TrainConfig DeskScale();
  // Optimizer values used for fine-tuning pretrained encoders.
  static TrainConfig PaperFaithful();

  // Rewrites the augmentation and loss settings implied by `mode`; custom
  // leaves them untouched.
  void ApplyMode();
  void Validate() const;
};

nlohmann::json ToJson(const TrainConfig& cfg);
// Fields missing from `j` keep the value they have in `base`.
TrainConfig TrainConfigFromJson(const nlohmann::json& j, TrainConfig base = TrainConfig::DeskScale());

struct MetricsRecord {
  int step = 0;
  int epoch = 0;
  double loss_short = 0.0;
  double loss_long = 0.0;
  double loss_total = 0.0;
  double lr = 0.0;
  double inv_temp = 0.0;
};

nlohmann::json ToJson(const MetricsRecord& m);

struct TrainState {
  TrainConfig config;
  Vocabulary vocab;
  DualEncoder model;
  Gradients adam_m;
  Gradients adam_v;
  int step = 0;
  std::string corpus_hash;
};

// Vocabulary over every caption plus the padding-probe sentence.
Vocabulary BuildCorpusVocabulary(const Corpus& corpus);

// Applies the mode, sizes the encoders from the corpus and initializes the
// model from the seed.
TrainState InitTraining(TrainConfig cfg, const Corpus& corpus);

int StepsPerEpoch(const TrainConfig& cfg, int corpus_size);
double LearningRateAt(const TrainConfig& cfg, int step);

struct BatchGradients {
  LossTerms loss;
  Gradients grads;
};

// Joint forward/backward over a batch of training pairs. A non-null `basis`
// freezes the PCA fit (used by finite-difference checks).
BatchGradients ComputeBatchGradients(const DualEncoder& model, const std::vector<TrainingPair>& pairs,
                                     const LossConfig& loss, const PcaBasis* basis = nullptr);

// The (corpus index, pair) list for a given global step.
std::vector<TrainingPair> BuildBatch(const TrainState& state, const Corpus& corpus, int step);

// One AdamW update with the step's learning rate. Frozen rows are untouched
// and the inverse temperature is clamped.
void ApplyAdamW(TrainState& state, const Gradients& grads, int step);

struct TrainHooks {
  std::ostream* metrics = nullptr;  // JSON lines
  int stop_after_step = -1;         // < 0 runs to the end
};

// Continues from state.step until all epochs are done (or stop_after_step).
std::vector<MetricsRecord> RunTraining(TrainState& state, const Corpus& corpus, const TrainHooks& hooks = {});

void SaveCheckpoint(const TrainState& state, const std::filesystem::path& path);
TrainState LoadCheckpoint(const std::filesystem::path& path);

// Resumes `state` against a corpus and config; throws ResumeMismatch when the
// corpus hash or any config field differs.
void CheckResumable(const TrainState& state, const TrainConfig& cfg, const std::string& corpus_hash);

}  // namespace debias
