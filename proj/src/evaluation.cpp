#include "debias/evaluation.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "debias/error.hpp"

namespace debias {
namespace {

using Eigen::MatrixXd;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Row-wise top-1 hit rate; ties resolve to the lowest column index.
double TopOneHits(const MatrixXd& scores, int& ties) {
  int hits = 0;
  ties = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    double best_score = scores(i, 0);
    int shared = 1;
    for (Eigen::Index j = 1; j < scores.cols(); ++j) {
      if (scores(i, j) > best_score) {
        best_score = scores(i, j);
        best = j;
        shared = 1;
      } else if (scores(i, j) == best_score) {
        ++shared;
      }
    }
    if (shared > 1) ++ties;
    if (best == i) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.rows());
}

nlohmann::json NullableVector(const std::vector<double>& v) {
  auto arr = nlohmann::json::array();
  for (double x : v) arr.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
  return arr;
}

std::vector<double> VectorOrNaN(const nlohmann::json& arr) {
  std::vector<double> v;
  for (const auto& x : arr) v.push_back(x.is_null() ? kNaN : x.get<double>());
  return v;
}

}  // namespace

RetrievalResult EvalRetrieval(const MatrixXd& text, const MatrixXd& image) {
  if (text.rows() != image.rows() || text.cols() != image.cols() || text.rows() == 0)
    throw Error(ErrorCode::kShapeMismatch, "text and image feature matrices must match and be non-empty");
  const MatrixXd scores = text * image.transpose();
  RetrievalResult r;
  r.n_queries = static_cast<int>(text.rows());
  r.recall_at_1_t2i = TopOneHits(scores, r.ties_t2i);
  r.recall_at_1_i2t = TopOneHits(scores.transpose(), r.ties_i2t);
  return r;
}

std::vector<Caption> CorpusCaptions(const Corpus& corpus) {
  std::vector<Caption> out;
  out.reserve(corpus.records.size());
  for (const auto& r : corpus.records) out.push_back(SplitSentences(r.caption));
  return out;
}

EncodedCaptions EncodeCaptions(const DualEncoder& model, const Vocabulary& vocab, const std::vector<Caption>& captions) {
  const int ctx = model.text_config().context_length();
  EncodedCaptions out;
  out.features.resize(static_cast<Eigen::Index>(captions.size()), model.text_config().output_dim);
  for (size_t i = 0; i < captions.size(); ++i) {
    const auto seq = Tokenize(captions[i], vocab, ctx);
    if (seq.truncated_tokens > 0) ++out.truncated;
    out.features.row(static_cast<Eigen::Index>(i)) = model.EncodeText(seq).feature;
  }
  return out;
}

MatrixXd EncodeImages(const DualEncoder& model, const Corpus& corpus) {
  MatrixXd v(corpus.size(), model.text_config().output_dim);
  for (int i = 0; i < corpus.size(); ++i) v.row(i) = model.EncodeImage(corpus.records[static_cast<size_t>(i)].image).feature;
  return v;
}

std::vector<ProbeRow> RunProbeSuite(const DualEncoder& model, const Vocabulary& vocab, const Corpus& corpus,
                                    const std::vector<Probe>& probes) {
  const auto captions = CorpusCaptions(corpus);
  const MatrixXd images = EncodeImages(model, corpus);

  auto evaluate = [&](const Probe& probe) {
    std::vector<Caption> probed;
    probed.reserve(captions.size());
    for (const auto& c : captions) probed.push_back(ProbeTransform(c, probe));
    const auto enc = EncodeCaptions(model, vocab, probed);
    ProbeRow row;
    row.result = EvalRetrieval(enc.features, images);
    row.result.label = probe.label;
    row.truncated = enc.truncated;
    return row;
  };

  std::vector<ProbeRow> rows{evaluate(Probe::Keep())};
  const RetrievalResult keep = rows.front().result;
  for (const auto& probe : probes) {
    if (probe.label == "keep") continue;
    ProbeRow row = evaluate(probe);
    row.delta_t2i = row.result.recall_at_1_t2i - keep.recall_at_1_t2i;
    row.delta_i2t = row.result.recall_at_1_i2t - keep.recall_at_1_i2t;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ProbeTableCsv(const std::vector<ProbeRow>& rows) {
  std::ostringstream os;
  os << "probe,n_queries,t2i_r1,i2t_r1,delta_t2i,delta_i2t,ties_t2i,ties_i2t,truncated\n";
  os << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.result.label << ',' << r.result.n_queries << ',' << r.result.recall_at_1_t2i << ','
       << r.result.recall_at_1_i2t << ',' << r.delta_t2i << ',' << r.delta_i2t << ',' << r.result.ties_t2i << ','
       << r.result.ties_i2t << ',' << r.truncated << '\n';
  }
  return os.str();
}

double AttentionProfile::Flatness(int start, int min_occupancy) const {
  double sum = 0.0;
  double sq = 0.0;
  int n = 0;
  for (size_t p = static_cast<size_t>(std::max(start, 0)); p < mean_pre_softmax.size(); ++p) {
    if (occupancy[p] < std::max(min_occupancy, 1) || !std::isfinite(mean_pre_softmax[p])) continue;
    sum += mean_pre_softmax[p];
    sq += mean_pre_softmax[p] * mean_pre_softmax[p];
    ++n;
  }
  if (n == 0) return kNaN;
  const double mean = sum / n;
  return std::sqrt(std::max(0.0, sq / n - mean * mean));
}

int AttentionProfile::PostSoftmaxArgmax() const {
  int best = 0;
  for (size_t p = 1; p < mean_post_softmax.size(); ++p)
    if (mean_post_softmax[p] > mean_post_softmax[static_cast<size_t>(best)]) best = static_cast<int>(p);
  return best;
}

AttentionProfile AggregateAttention(const std::vector<AttentionCapture>& captures) {
  AttentionProfile prof;
  if (captures.empty()) return prof;
  const size_t ctx = captures.front().pre_softmax.size();
  std::vector<double> pre_sum(ctx, 0.0);
  std::vector<double> post_sum(ctx, 0.0);
  prof.occupancy.assign(ctx, 0);
  for (const auto& cap : captures) {
    if (cap.pre_softmax.size() != ctx || cap.sot_index != 0)
      throw Error(ErrorCode::kShapeMismatch, "attention captures must share the default layout");
    prof.sot_pre_softmax += cap.pre_softmax[0];
    prof.sot_post_softmax += cap.post_softmax[0];
    for (size_t p = 1; p < ctx; ++p) {
      // Masked positions carry -inf before the softmax.
      if (!std::isfinite(cap.pre_softmax[p])) continue;
      pre_sum[p] += cap.pre_softmax[p];
      post_sum[p] += cap.post_softmax[p];
      ++prof.occupancy[p];
    }
  }
  prof.n_captions = static_cast<int>(captures.size());
  prof.sot_pre_softmax /= prof.n_captions;
  prof.sot_post_softmax /= prof.n_captions;
  prof.mean_pre_softmax.assign(ctx, kNaN);
  prof.mean_post_softmax.assign(ctx, kNaN);
  prof.mean_post_softmax[0] = prof.sot_post_softmax;
  for (size_t p = 1; p < ctx; ++p) {
    if (prof.occupancy[p] == 0) continue;
    prof.mean_pre_softmax[p] = pre_sum[p] / prof.occupancy[p];
    prof.mean_post_softmax[p] = post_sum[p] / prof.occupancy[p];
  }
  return prof;
}

AttentionProfile ComputeAttentionProfile(const DualEncoder& model, const Vocabulary& vocab,
                                         const std::vector<Caption>& captions) {
  const int ctx = model.text_config().context_length();
  std::vector<AttentionCapture> captures;
  captures.reserve(captions.size());
  for (const auto& c : captions) captures.push_back(*model.EncodeText(Tokenize(c, vocab, ctx), true).attention);
  return AggregateAttention(captures);
}

nlohmann::json ToJson(const AttentionProfile& p) {
  std::vector<bool> high_variance;
  for (int n : p.occupancy) high_variance.push_back(n > 0 && n < kHighVarianceOccupancy);
  const double flat = p.Flatness();
  return nlohmann::json{
      {"schema", kProfileSchema},
      {"n_captions", p.n_captions},
      {"sot_pre_softmax", p.sot_pre_softmax},
      {"sot_post_softmax", p.sot_post_softmax},
      {"mean_pre_softmax", NullableVector(p.mean_pre_softmax)},
      {"mean_post_softmax", NullableVector(p.mean_post_softmax)},
      {"occupancy", p.occupancy},
      {"high_variance", high_variance},
      {"flatness_from", kFlatnessStart},
      {"flatness_min_occupancy", kFlatnessMinOccupancy},
      {"flatness", std::isfinite(flat) ? nlohmann::json(flat) : nlohmann::json(nullptr)},
      {"post_softmax_argmax", p.PostSoftmaxArgmax()},
  };
}

AttentionProfile AttentionProfileFromJson(const nlohmann::json& j) {
  if (j.value("schema", "") != kProfileSchema) throw Error(ErrorCode::kParse, "not an attention profile");
  AttentionProfile p;
  p.n_captions = j.at("n_captions").get<int>();
  p.sot_pre_softmax = j.at("sot_pre_softmax").get<double>();
  p.sot_post_softmax = j.at("sot_post_softmax").get<double>();
  p.mean_pre_softmax = VectorOrNaN(j.at("mean_pre_softmax"));
  p.mean_post_softmax = VectorOrNaN(j.at("mean_post_softmax"));
  p.occupancy = j.at("occupancy").get<std::vector<int>>();
  return p;
}

}  // namespace debias
