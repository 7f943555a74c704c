#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "debias/augment.hpp"
#include "debias/corpus.hpp"
#include "debias/encoder.hpp"
#include "debias/text.hpp"

namespace debias {

struct RetrievalResult {
  double recall_at_1_t2i = 0.0;
  double recall_at_1_i2t = 0.0;
  int n_queries = 0;
  // Queries whose best score was shared by several candidates (resolved to
  // the lowest index).
  int ties_t2i = 0;
  int ties_i2t = 0;
  std::string label;
};

// Recall@1 in both directions over the full gallery using dot-product scores.
RetrievalResult EvalRetrieval(const Eigen::MatrixXd& text_features, const Eigen::MatrixXd& image_features);

struct EncodedCaptions {
  Eigen::MatrixXd features;
  int truncated = 0;  // captions that did not fit the context
};

EncodedCaptions EncodeCaptions(const DualEncoder& model, const Vocabulary& vocab, const std::vector<Caption>& captions);
Eigen::MatrixXd EncodeImages(const DualEncoder& model, const Corpus& corpus);

struct ProbeRow {
  RetrievalResult result;
  double delta_t2i = 0.0;  // vs. the keep probe
  double delta_i2t = 0.0;
  int truncated = 0;
};

// Re-encodes every caption under each probe against the fixed image gallery.
// The keep probe is always evaluated (first row) to anchor the deltas.
std::vector<ProbeRow> RunProbeSuite(const DualEncoder& model, const Vocabulary& vocab, const Corpus& corpus,
                                    const std::vector<Probe>& probes);

std::string ProbeTableCsv(const std::vector<ProbeRow>& rows);

// Positions with fewer occupants than this are flagged as high variance.
inline constexpr int kHighVarianceOccupancy = 5;
inline constexpr int kFlatnessStart = 20;
// Flatness uses every occupied position; the flag above only marks plots.
inline constexpr int kFlatnessMinOccupancy = 1;

struct AttentionProfile {
  // Mean pre-softmax EOT attention over captions occupying each position.
  // The SOT entry is excluded (NaN) and reported in sot_pre_softmax.
  std::vector<double> mean_pre_softmax;
  // Captions for which the position holds SOT, a caption token, prefix PAD
  // or EOT (i.e. is not masked), SOT excluded.
  std::vector<int> occupancy;
  // Mean post-softmax weight per position, SOT included (each caption sees
  // SOT, so entry sot uses all captions).
  std::vector<double> mean_post_softmax;
  double sot_pre_softmax = 0.0;
  double sot_post_softmax = 0.0;
  int n_captions = 0;

  // Standard deviation of mean_pre_softmax over positions >= start whose
  // occupancy is at least min_occupancy.
  double Flatness(int start = kFlatnessStart, int min_occupancy = kFlatnessMinOccupancy) const;
  // Argmax of mean_post_softmax (SOT included).
  int PostSoftmaxArgmax() const;
};

AttentionProfile ComputeAttentionProfile(const DualEncoder& model, const Vocabulary& vocab,
                                         const std::vector<Caption>& captions);
// Same aggregation over already captured rows (all default-layout, SOT at 0).
AttentionProfile AggregateAttention(const std::vector<AttentionCapture>& captures);

inline constexpr std::string_view kProfileSchema = "debias.attention_profile.v1";
nlohmann::json ToJson(const AttentionProfile& p);
AttentionProfile AttentionProfileFromJson(const nlohmann::json& j);

std::vector<Caption> CorpusCaptions(const Corpus& corpus);

}  // namespace debias
