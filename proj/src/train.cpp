#include "debias/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "debias/error.hpp"
#include "debias/rng.hpp"

namespace debias {
namespace {

using nlohmann::json;

constexpr std::string_view kCheckpointSchema = "debias.checkpoint.v1";
constexpr std::string_view kMetricsSchema = "debias.metrics.v1";
constexpr std::uint64_t kPermutationTag = 0x9e3d;

template <typename T>
void Read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json MatrixToJson(const Eigen::MatrixXd& m) {
  std::vector<double> data(static_cast<size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data[static_cast<size_t>(r * m.cols() + c)] = m(r, c);
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd MatrixFromJson(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw Error(ErrorCode::kParse, "tensor size mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<size_t>(r * cols + c)];
  return m;
}

std::vector<int> EpochPermutation(std::uint64_t seed, int epoch, int n) {
  std::vector<int> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = DeriveRng(seed, {kPermutationTag, static_cast<std::uint64_t>(epoch)});
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

}  // namespace

std::string ToString(TrainMode m) {
  switch (m) {
    case TrainMode::kLongClipBaseline: return "longclip_baseline";
    case TrainMode::kDebias: return "debias";
    case TrainMode::kCustom: return "custom";
  }
  return "custom";
}

TrainMode ParseTrainMode(std::string_view text) {
  if (text == "longclip_baseline" || text == "longclip" || text == "baseline") return TrainMode::kLongClipBaseline;
  if (text == "debias") return TrainMode::kDebias;
  if (text == "custom") return TrainMode::kCustom;
  throw Error(ErrorCode::kInvalidArgument, "unknown mode '" + std::string(text) + "'");
}

TrainConfig TrainConfig::DeskScale() { return TrainConfig{}; }

TrainConfig TrainConfig::PaperFaithful() {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 256;
  cfg.warmup_iters = 200;
  cfg.learning_rate = 1e-6;
  cfg.weight_decay = 1e-2;
  cfg.adam_beta1 = 0.9;
  cfg.adam_beta2 = 0.999;
  cfg.adam_eps = 1e-8;
  return cfg;
}

void TrainConfig::ApplyMode() {
  switch (mode) {
    case TrainMode::kLongClipBaseline:
      augment.strategy = SamplingStrategy::LongClipSummary();
      augment.padding = PaddingMode::None();
      loss.weighted = false;
      break;
    case TrainMode::kDebias:
      augment.strategy = SamplingStrategy::Random();
      augment.padding = PaddingMode::Random();
      loss.weighted = true;
      break;
    case TrainMode::kCustom: break;
  }
}

void TrainConfig::Validate() const {
  if (epochs < 0) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 0");
  if (batch_size < 2) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 2 (negatives needed)");
  if (warmup_iters < 0) throw Error(ErrorCode::kInvalidArgument, "warmup_iters must be >= 0");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning_rate must be > 0");
  if (weight_decay < 0.0) throw Error(ErrorCode::kInvalidArgument, "weight_decay must be >= 0");
  loss.Validate();
  if (loss.pca_rank > std::min(batch_size, text.output_dim))
    throw Error(ErrorCode::kRankTooLarge, "pca_rank exceeds min(batch_size, output_dim)");
}

json ToJson(const TrainConfig& c) {
  return json{
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"warmup_iters", c.warmup_iters},
      {"learning_rate", c.learning_rate},
      {"weight_decay", c.weight_decay},
      {"adam_beta1", c.adam_beta1},
      {"adam_beta2", c.adam_beta2},
      {"adam_eps", c.adam_eps},
      {"seed", c.seed},
      {"mode", ToString(c.mode)},
      {"augment",
       {{"strategy", ToString(c.augment.strategy)},
        {"padding", ToString(c.augment.padding)},
        {"context_length", c.augment.context_length}}},
      {"loss",
       {{"lambda_short", c.loss.lambda_short},
        {"weighted", c.loss.weighted},
        {"pca_rank", c.loss.pca_rank},
        {"pca_renormalize", c.loss.pca_renormalize},
        {"init_inv_temperature", c.loss.init_inv_temperature},
        {"max_inv_temperature", c.loss.max_inv_temperature}}},
      {"text",
       {{"layers", c.text.layers},
        {"heads", c.text.heads},
        {"model_dim", c.text.model_dim},
        {"ff_dim", c.text.ff_dim},
        {"output_dim", c.text.output_dim},
        {"vocab_size", c.text.vocab_size},
        {"pooling", ToString(c.text.pooling)},
        {"base_context", c.text.base_context},
        {"stretch", c.text.stretch},
        {"stretch_all", c.text.stretch_all},
        {"stretch_freeze", c.text.stretch_freeze},
        {"stretch_factor", c.text.stretch_factor},
        {"freeze_prefix", c.text.freeze_prefix}}},
      {"image", {{"input_dim", c.image.input_dim}, {"hidden_dim", c.image.hidden_dim}}},
  };
}

TrainConfig TrainConfigFromJson(const json& j, TrainConfig c) {
  try {
    Read(j, "epochs", c.epochs);
    Read(j, "batch_size", c.batch_size);
    Read(j, "warmup_iters", c.warmup_iters);
    Read(j, "learning_rate", c.learning_rate);
    Read(j, "weight_decay", c.weight_decay);
    Read(j, "adam_beta1", c.adam_beta1);
    Read(j, "adam_beta2", c.adam_beta2);
    Read(j, "adam_eps", c.adam_eps);
    Read(j, "seed", c.seed);
    if (j.contains("mode")) c.mode = ParseTrainMode(j["mode"].get<std::string>());
    if (j.contains("augment")) {
      const auto& a = j["augment"];
      if (a.contains("strategy")) c.augment.strategy = ParseSamplingStrategy(a["strategy"].get<std::string>());
      if (a.contains("padding")) c.augment.padding = ParsePaddingMode(a["padding"].get<std::string>());
      Read(a, "context_length", c.augment.context_length);
    }
    if (j.contains("loss")) {
      const auto& l = j["loss"];
      Read(l, "lambda_short", c.loss.lambda_short);
      Read(l, "weighted", c.loss.weighted);
      Read(l, "pca_rank", c.loss.pca_rank);
      Read(l, "pca_renormalize", c.loss.pca_renormalize);
      Read(l, "init_inv_temperature", c.loss.init_inv_temperature);
      Read(l, "max_inv_temperature", c.loss.max_inv_temperature);
    }
    if (j.contains("text")) {
      const auto& t = j["text"];
      Read(t, "layers", c.text.layers);
      Read(t, "heads", c.text.heads);
      Read(t, "model_dim", c.text.model_dim);
      Read(t, "ff_dim", c.text.ff_dim);
      Read(t, "output_dim", c.text.output_dim);
      Read(t, "vocab_size", c.text.vocab_size);
      if (t.contains("pooling")) c.text.pooling = ParsePooling(t["pooling"].get<std::string>());
      Read(t, "base_context", c.text.base_context);
      Read(t, "stretch", c.text.stretch);
      Read(t, "stretch_all", c.text.stretch_all);
      Read(t, "stretch_freeze", c.text.stretch_freeze);
      Read(t, "stretch_factor", c.text.stretch_factor);
      Read(t, "freeze_prefix", c.text.freeze_prefix);
    }
    if (j.contains("image")) {
      Read(j["image"], "input_dim", c.image.input_dim);
      Read(j["image"], "hidden_dim", c.image.hidden_dim);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("bad train config: ") + e.what());
  }
  return c;
}

json ToJson(const MetricsRecord& m) {
  return json{{"schema", kMetricsSchema}, {"step", m.step},          {"epoch", m.epoch},
              {"loss_s", m.loss_short},   {"loss_l", m.loss_long},   {"loss_total", m.loss_total},
              {"lr", m.lr},               {"inv_temp", m.inv_temp}};
}

Vocabulary BuildCorpusVocabulary(const Corpus& corpus) {
  std::vector<std::string> texts;
  texts.reserve(corpus.records.size() + 1);
  for (const auto& r : corpus.records) texts.push_back(r.caption);
  texts.emplace_back(kPadSentence);
  return Vocabulary::Build(texts);
}

TrainState InitTraining(TrainConfig cfg, const Corpus& corpus) {
  if (corpus.records.empty()) throw Error(ErrorCode::kCorpusEmpty, "training corpus is empty");
  cfg.ApplyMode();
  Vocabulary vocab = BuildCorpusVocabulary(corpus);
  cfg.text.vocab_size = vocab.size();
  cfg.image.input_dim = corpus.image_dim();
  if (cfg.image.input_dim == 0) throw Error(ErrorCode::kInvalidArgument, "corpus records carry no image vectors");
  cfg.augment.context_length = cfg.text.context_length();
  cfg.Validate();
  DualEncoder model(cfg.text, cfg.image, cfg.seed);
  auto zeros = model.params().ZerosLike();
  return TrainState{cfg, std::move(vocab), std::move(model), zeros, zeros, 0, {}};
}

int StepsPerEpoch(const TrainConfig& cfg, int corpus_size) { return corpus_size / cfg.batch_size; }

double LearningRateAt(const TrainConfig& cfg, int step) {
  if (cfg.warmup_iters == 0) return cfg.learning_rate;
  return cfg.learning_rate * std::min(1.0, static_cast<double>(step) / cfg.warmup_iters);
}

BatchGradients ComputeBatchGradients(const DualEncoder& model, const std::vector<TrainingPair>& pairs,
                                     const LossConfig& loss, const PcaBasis* basis) {
  const auto n = static_cast<Eigen::Index>(pairs.size());
  const int d_out = model.text_config().output_dim;
  std::vector<TextOutput> longs;
  std::vector<TextOutput> shorts;
  std::vector<ImageOutput> images;
  longs.reserve(pairs.size());
  shorts.reserve(pairs.size());
  images.reserve(pairs.size());
  Eigen::MatrixXd u_long(n, d_out), u_short(n, d_out), v(n, d_out);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = pairs[static_cast<size_t>(i)];
    longs.push_back(model.EncodeText(p.long_tokens));
    shorts.push_back(model.EncodeText(p.short_tokens));
    images.push_back(model.EncodeImage(p.image));
    u_long.row(i) = longs.back().feature;
    u_short.row(i) = shorts.back().feature;
    v.row(i) = images.back().feature;
  }

  BatchGradients out;
  out.loss = TotalLoss(u_short, u_long, v, model.inv_temperature(), loss, basis);
  out.grads = model.params().ZerosLike();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<size_t>(i);
    model.BackwardText(longs[k].cache, out.loss.d_long.row(i), out.grads);
    model.BackwardText(shorts[k].cache, out.loss.d_short.row(i), out.grads);
    model.BackwardImage(images[k].cache, out.loss.d_image.row(i), out.grads);
  }
  // d/d(log s) = s * d/ds
  out.grads[static_cast<size_t>(model.logit_scale_index())](0, 0) =
      out.loss.d_inv_temperature * model.inv_temperature();
  return out;
}

std::vector<TrainingPair> BuildBatch(const TrainState& state, const Corpus& corpus, int step) {
  const auto& cfg = state.config;
  const int spe = StepsPerEpoch(cfg, corpus.size());
  if (spe == 0) throw Error(ErrorCode::kCorpusEmpty, "corpus smaller than one batch");
  const int epoch = step / spe;
  const int offset = (step % spe) * cfg.batch_size;
  const auto perm = EpochPermutation(cfg.seed, epoch, corpus.size());
  std::vector<TrainingPair> pairs;
  pairs.reserve(static_cast<size_t>(cfg.batch_size));
  for (int b = 0; b < cfg.batch_size; ++b) {
    const int idx = perm[static_cast<size_t>(offset + b)];
    const auto& rec = corpus.records[static_cast<size_t>(idx)];
    Rng rng = DeriveRng(cfg.seed, {static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(idx)});
    pairs.push_back(BuildTrainingPair(SplitSentences(rec.caption), rec.image, rng, cfg.augment, state.vocab));
  }
  return pairs;
}

void ApplyAdamW(TrainState& state, const Gradients& grads, int step) {
  const auto& cfg = state.config;
  const double lr = LearningRateAt(cfg, step);
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, step);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, step);
  auto& params = state.model.params();
  for (int i = 0; i < params.size(); ++i) {
    auto& e = params.entry(i);
    const auto k = static_cast<size_t>(i);
    const Eigen::Index skip = std::min<Eigen::Index>(e.frozen_rows, e.value.rows());
    const Eigen::Index live = e.value.rows() - skip;
    if (live == 0) continue;
    auto g = grads[k].bottomRows(live);
    auto m = state.adam_m[k].bottomRows(live);
    auto v = state.adam_v[k].bottomRows(live);
    auto p = e.value.bottomRows(live);
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g.cwiseProduct(g);
    const Eigen::MatrixXd update =
        (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.adam_eps);
    if (e.decay) p *= (1.0 - lr * cfg.weight_decay);
    p -= lr * update;
  }
  auto& scale = params.value(state.model.logit_scale_index())(0, 0);
  scale = std::min(scale, std::log(cfg.loss.max_inv_temperature));
}

std::vector<MetricsRecord> RunTraining(TrainState& state, const Corpus& corpus, const TrainHooks& hooks) {
  if (corpus.records.empty()) throw Error(ErrorCode::kCorpusEmpty, "training corpus is empty");
  const int spe = StepsPerEpoch(state.config, corpus.size());
  if (spe == 0) throw Error(ErrorCode::kCorpusEmpty, "corpus smaller than one batch");
  const int total = state.config.epochs * spe;

  std::vector<MetricsRecord> log;
  while (state.step < total && (hooks.stop_after_step < 0 || state.step < hooks.stop_after_step)) {
    const auto pairs = BuildBatch(state, corpus, state.step);
    const auto batch = ComputeBatchGradients(state.model, pairs, state.config.loss);
    const int t = state.step + 1;
    ApplyAdamW(state, batch.grads, t);
    state.step = t;

    MetricsRecord m;
    m.step = t;
    m.epoch = (t - 1) / spe;
    m.loss_short = batch.loss.loss_short;
    m.loss_long = batch.loss.loss_long;
    m.loss_total = batch.loss.total;
    m.lr = LearningRateAt(state.config, t);
    m.inv_temp = state.model.inv_temperature();
    if (hooks.metrics != nullptr) *hooks.metrics << ToJson(m).dump() << '\n';
    log.push_back(m);
  }
  return log;
}

void SaveCheckpoint(const TrainState& state, const std::filesystem::path& path) {
  json j;
  j["schema"] = kCheckpointSchema;
  j["config"] = ToJson(state.config);
  j["vocab"] = state.vocab.WordTokens();
  j["step"] = state.step;
  j["corpus_hash"] = state.corpus_hash;
  // Every random stream is derived from (seed, epoch, sample); the seed and
  // step therefore pin the generator state completely.
  j["rng"] = {{"seed", state.config.seed}, {"step", state.step}};
  json params = json::array();
  const auto& ps = state.model.params();
  for (int i = 0; i < ps.size(); ++i) {
    const auto& e = ps.entry(i);
    const auto k = static_cast<size_t>(i);
    params.push_back({{"name", e.name},
                      {"frozen_rows", e.frozen_rows},
                      {"value", MatrixToJson(e.value)},
                      {"adam_m", MatrixToJson(state.adam_m[k])},
                      {"adam_v", MatrixToJson(state.adam_v[k])}});
  }
  j["params"] = std::move(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump() << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

TrainState LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
  if (j.value("schema", "") != kCheckpointSchema) throw Error(ErrorCode::kParse, "not a checkpoint: " + path.string());

  TrainConfig cfg = TrainConfigFromJson(j.at("config"));
  Vocabulary vocab = Vocabulary::FromTokens(j.at("vocab").get<std::vector<std::string>>());
  DualEncoder model(cfg.text, cfg.image, cfg.seed);
  auto& ps = model.params();
  const auto& params = j.at("params");
  if (static_cast<int>(params.size()) != ps.size()) throw Error(ErrorCode::kParse, "parameter count mismatch");
  Gradients m = ps.ZerosLike();
  Gradients v = ps.ZerosLike();
  for (int i = 0; i < ps.size(); ++i) {
    const auto& pj = params[static_cast<size_t>(i)];
    auto& e = ps.entry(i);
    if (pj.at("name").get<std::string>() != e.name) throw Error(ErrorCode::kParse, "parameter order mismatch at " + e.name);
    Eigen::MatrixXd value = MatrixFromJson(pj.at("value"));
    if (value.rows() != e.value.rows() || value.cols() != e.value.cols())
      throw Error(ErrorCode::kParse, "shape mismatch for " + e.name);
    e.value = std::move(value);
    e.frozen_rows = pj.at("frozen_rows").get<int>();
    m[static_cast<size_t>(i)] = MatrixFromJson(pj.at("adam_m"));
    v[static_cast<size_t>(i)] = MatrixFromJson(pj.at("adam_v"));
  }
  return TrainState{cfg, std::move(vocab), std::move(model), std::move(m), std::move(v), j.at("step").get<int>(),
                    j.value("corpus_hash", "")};
}

void CheckResumable(const TrainState& state, const TrainConfig& cfg, const std::string& corpus_hash) {
  if (!state.corpus_hash.empty() && !corpus_hash.empty() && state.corpus_hash != corpus_hash)
    throw Error(ErrorCode::kResumeMismatch, "checkpoint was trained on a different corpus");
  TrainConfig want = cfg;
  want.ApplyMode();
  want.text.vocab_size = state.config.text.vocab_size;
  want.image.input_dim = state.config.image.input_dim;
  want.augment.context_length = want.text.context_length();
  if (ToJson(want) != ToJson(state.config))
    throw Error(ErrorCode::kResumeMismatch, "configuration differs from the checkpoint");
}

}  // namespace debias
