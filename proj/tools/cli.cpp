#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "debias/augment.hpp"
#include "debias/corpus.hpp"
#include "debias/error.hpp"
#include "debias/evaluation.hpp"
#include "debias/pos_embed.hpp"
#include "debias/rng.hpp"
#include "debias/text.hpp"
#include "debias/train.hpp"

namespace debias::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::string_view kPosTableSchema = "debias.pos_table.v1";
constexpr std::string_view kAugmentSchema = "debias.augment_preview.v1";
constexpr std::string_view kRetrievalSchema = "debias.retrieval.v1";

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

json ReadJson(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

std::string Absolute(const std::string& path) {
  if (path.empty()) return path;
  return fs::absolute(path).lexically_normal().string();
}

template <class T>
T Get(const json& config, const char* key) {
  if (!config.contains(key)) throw Error(ErrorCode::kInvalidArgument, std::string("missing config key '") + key + "'");
  try {
    return config.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("config key '") + key + "': " + e.what());
  }
}

std::string RequirePath(const json& config, const char* key) {
  auto path = Get<std::string>(config, key);
  if (path.empty()) throw Error(ErrorCode::kInvalidArgument, std::string("--") + key + " is required");
  return path;
}

// Collects the artifacts of one run and renders its manifest.
class Run {
 public:
  Run(std::string command, json config, fs::path dir) : command_(std::move(command)), config_(std::move(config)),
                                                        dir_(std::move(dir)) {}

  const fs::path& dir() const { return dir_; }
  json& config() { return config_; }

  void Input(const std::string& name, const std::string& path) {
    inputs_[name] = {{"path", path}, {"hash", HashFile(path)}};
  }
  fs::path Output(const std::string& name, const std::string& file) {
    outputs_[name] = file;
    return dir_ / file;
  }
  void SetCorpusHash(std::string hash) { corpus_hash_ = std::move(hash); }

  json Finish() const {
    json outputs = json::object();
    for (const auto& [name, file] : outputs_) outputs[name] = {{"file", file}, {"hash", HashFile(dir_ / file)}};
    json manifest{{"schema", kManifestSchema},
                  {"tool_version", kToolVersion},
                  {"command", command_},
                  {"seed", config_.value("seed", json(0))},
                  {"config", config_},
                  {"inputs", inputs_.empty() ? json::object() : inputs_},
                  {"outputs", outputs},
                  {"corpus_hash", corpus_hash_}};
    WriteText(dir_ / kManifestName, manifest.dump(2) + "\n");
    return manifest;
  }

 private:
  std::string command_;
  json config_;
  fs::path dir_;
  json inputs_ = json::object();
  std::map<std::string, std::string> outputs_;
  std::string corpus_hash_;
};

std::string Primary(const std::string& primary, const char* fallback) { return primary.empty() ? fallback : primary; }

SyntheticCorpusSpec SpecFromJson(const json& c) {
  SyntheticCorpusSpec spec;
  spec.n_samples = Get<int>(c, "n_samples");
  spec.concepts_per_image = Get<int>(c, "concepts_per_image");
  spec.min_sentences = Get<int>(c, "min_sentences");
  spec.max_sentences = Get<int>(c, "max_sentences");
  spec.vocab_size = Get<int>(c, "vocab_size");
  spec.detail_words_per_concept = Get<int>(c, "detail_words_per_concept");
  spec.summary_mode = ParseSummaryMode(Get<std::string>(c, "summary_mode"));
  spec.image_noise_sigma = Get<double>(c, "image_noise_sigma");
  spec.image_dim = Get<int>(c, "image_dim");
  return spec;
}

void CmdGen(Run& run, const std::string& primary) {
  const json& c = run.config();
  SyntheticCorpusSpec spec = SpecFromJson(c);
  const int holdout = Get<int>(c, "holdout");
  if (holdout < 0) throw Error(ErrorCode::kInvalidArgument, "holdout must be >= 0");
  spec.Validate();
  // Held-out records share the concept bases, so they come from the same draw.
  spec.n_samples += holdout;
  Rng rng(Get<std::uint64_t>(c, "seed"));
  Corpus all = GenerateCorpus(spec, rng);
  Corpus train;
  Corpus held;
  const auto split = all.records.begin() + (all.size() - holdout);
  train.records.assign(all.records.begin(), split);
  held.records.assign(split, all.records.end());

  const fs::path path = run.Output("corpus", Primary(primary, "corpus.jsonl"));
  SaveCorpus(train, path);
  if (holdout > 0) SaveCorpus(held, run.Output("heldout", "heldout.jsonl"));
  run.SetCorpusHash(HashFile(path));
  std::cout << "gen: " << train.size() << " records -> " << path.string();
  if (holdout > 0) std::cout << " (+" << holdout << " held out)";
  std::cout << "\n";
}

std::string RenderLayout(const TokenSequence& seq, const Vocabulary& vocab) {
  std::ostringstream os;
  int run_length = 0;
  auto flush = [&] {
    if (run_length > 0) os << " [PAD]x" << run_length;
    run_length = 0;
  };
  for (size_t p = 0; p < seq.ids.size(); ++p) {
    const int id = seq.ids[p];
    if (id == Vocabulary::kPad) {
      ++run_length;
      continue;
    }
    flush();
    if (p > 0) os << ' ';
    if (id == Vocabulary::kSot)
      os << "[SOT]";
    else if (id == Vocabulary::kEot)
      os << "[EOT]";
    else
      os << vocab.Token(id);
  }
  flush();
  return os.str();
}

SamplingStrategy StrategyFromJson(const json& c) {
  const auto text = Get<std::string>(c, "strategy");
  SamplingStrategy s = ParseSamplingStrategy(text);
  const bool explicit_arg = text.find(':') != std::string::npos;
  if (s.kind == SamplingStrategy::Kind::kIndependent && !explicit_arg) s = SamplingStrategy::Independent(Get<double>(c, "p"));
  if (s.kind == SamplingStrategy::Kind::kKeepN && !explicit_arg) s = SamplingStrategy::KeepN(Get<int>(c, "n"));
  return s;
}

void CmdAugment(Run& run, const std::string& primary) {
  json& c = run.config();
  const auto corpus_path = RequirePath(c, "corpus");
  run.Input("corpus", corpus_path);
  const Corpus corpus = LoadCorpus(corpus_path);
  run.SetCorpusHash(HashFile(corpus_path));
  if (corpus.records.empty()) throw Error(ErrorCode::kCorpusEmpty, "corpus is empty");

  AugmentConfig cfg;
  cfg.strategy = StrategyFromJson(c);
  cfg.padding = ParsePaddingMode(Get<std::string>(c, "padding"));
  if (cfg.strategy.kind == SamplingStrategy::Kind::kLongClipSummary) cfg.padding = PaddingMode::None();
  cfg.context_length = Get<int>(c, "context_length");
  c["strategy"] = ToString(cfg.strategy);
  c["padding"] = ToString(cfg.padding);

  const Vocabulary vocab = BuildCorpusVocabulary(corpus);
  const auto seed = Get<std::uint64_t>(c, "seed");
  int preview = Get<int>(c, "preview");
  if (preview <= 0 || preview > corpus.size()) preview = corpus.size();

  std::ostringstream lines;
  for (int i = 0; i < preview; ++i) {
    const auto& r = corpus.records[static_cast<size_t>(i)];
    const Caption caption = SplitSentences(r.caption);
    Rng rng = DeriveRng(seed, {static_cast<std::uint64_t>(i)});
    const TrainingPair pair = BuildTrainingPair(caption, r.image, rng, cfg, vocab);
    json j{{"schema", kAugmentSchema},
           {"id", r.id},
           {"summary", caption.sentence(0)},
           {"short_caption", pair.short_caption.raw()},
           {"short_sentences", pair.short_caption.size()},
           {"short_layout", RenderLayout(pair.short_tokens, vocab)},
           {"n_pre", pair.short_tokens.n_pre},
           {"n_post", pair.short_tokens.n_post},
           {"eot_index", pair.short_tokens.eot_index},
           {"degenerate", pair.degenerate},
           {"short_truncated", pair.short_truncated},
           {"long_truncated", pair.long_truncated}};
    lines << j.dump() << "\n";
    std::cout << r.id << "  short: " << pair.short_caption.raw() << "\n    " << RenderLayout(pair.short_tokens, vocab)
              << "\n";
  }
  WriteText(run.Output("preview", Primary(primary, "augment.jsonl")), lines.str());
}

Eigen::MatrixXd TableFromJson(const json& j) {
  const auto rows = j.at("rows").get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw Error(ErrorCode::kShapeMismatch, "positional table has no rows");
  Eigen::MatrixXd t(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) throw Error(ErrorCode::kShapeMismatch, "ragged positional table");
    for (size_t d = 0; d < rows[r].size(); ++d) t(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)) = rows[r][d];
  }
  return t;
}

json TableToJson(const PositionalTable& t, int source_rows) {
  std::vector<std::vector<double>> rows(static_cast<size_t>(t.length()));
  for (int r = 0; r < t.length(); ++r) {
    rows[static_cast<size_t>(r)].assign(t.embeddings.row(r).data(), t.embeddings.row(r).data() + t.embeddings.cols());
  }
  return json{{"schema", kPosTableSchema},
              {"source_rows", source_rows},
              {"frozen_prefix", t.frozen_prefix},
              {"stretch_factor", t.stretch_factor},
              {"rows", rows}};
}

void CmdStretch(Run& run, const std::string& primary) {
  const json& c = run.config();
  Eigen::MatrixXd source;
  const auto input = Get<std::string>(c, "input");
  if (!input.empty()) {
    run.Input("table", input);
    source = TableFromJson(ReadJson(input));
  } else {
    const int rows = Get<int>(c, "rows");
    const int dim = Get<int>(c, "dim");
    if (rows < 1 || dim < 1) throw Error(ErrorCode::kInvalidArgument, "rows and dim must be >= 1");
    Rng rng(Get<std::uint64_t>(c, "seed"));
    std::normal_distribution<double> normal(0.0, 0.01);
    source.resize(rows, dim);
    for (int r = 0; r < rows; ++r)
      for (int d = 0; d < dim; ++d) source(r, d) = normal(rng);
  }
  const int factor = Get<int>(c, "factor");
  const PositionalTable out = Get<bool>(c, "all") ? StretchAll(source, factor)
                                                  : Stretch(source, Get<int>(c, "freeze"), factor, -1);
  WriteText(run.Output("table", Primary(primary, "table.json")),
            TableToJson(out, static_cast<int>(source.rows())).dump() + "\n");
  std::cout << "stretch: " << source.rows() << " -> " << out.length() << " rows, " << out.frozen_prefix
            << " frozen\n";
}

TrainConfig PresetConfig(const std::string& preset) {
  if (preset == "desk") return TrainConfig::DeskScale();
  if (preset == "paper") return TrainConfig::PaperFaithful();
  throw Error(ErrorCode::kInvalidArgument, "unknown preset '" + preset + "' (desk|paper)");
}

void CmdTrain(Run& run, const std::string&) {
  json& c = run.config();
  const auto corpus_path = RequirePath(c, "corpus");
  run.Input("corpus", corpus_path);
  const Corpus corpus = LoadCorpus(corpus_path);
  const std::string corpus_hash = HashFile(corpus_path);
  run.SetCorpusHash(corpus_hash);
  const TrainConfig cfg = TrainConfigFromJson(c.at("train"), PresetConfig(Get<std::string>(c, "preset")));

  const auto resume = Get<std::string>(c, "resume");
  TrainState state = [&] {
    if (resume.empty()) {
      TrainState s = InitTraining(cfg, corpus);
      s.corpus_hash = corpus_hash;
      return s;
    }
    run.Input("resume", resume);
    TrainState s = LoadCheckpoint(resume);
    CheckResumable(s, cfg, corpus_hash);
    return s;
  }();
  c["train"] = ToJson(state.config);

  std::ofstream metrics(run.Output("metrics", "metrics.jsonl"), std::ios::binary);
  if (!metrics) throw Error(ErrorCode::kIo, "cannot write metrics log");
  TrainHooks hooks;
  hooks.metrics = &metrics;
  hooks.stop_after_step = Get<int>(c, "stop_after_step");
  const auto log = RunTraining(state, corpus, hooks);
  metrics.close();
  SaveCheckpoint(state, run.Output("checkpoint", "checkpoint.json"));
  std::cout << "train: " << ToString(state.config.mode) << " step " << state.step;
  if (!log.empty()) std::cout << " loss " << log.back().loss_total;
  std::cout << "\n";
}

struct Loaded {
  TrainState state;
  Corpus corpus;
};

Loaded LoadModelAndCorpus(Run& run) {
  const json& c = run.config();
  const auto checkpoint = RequirePath(c, "checkpoint");
  const auto corpus_path = RequirePath(c, "corpus");
  run.Input("checkpoint", checkpoint);
  run.Input("corpus", corpus_path);
  run.SetCorpusHash(HashFile(corpus_path));
  Loaded l{LoadCheckpoint(checkpoint), LoadCorpus(corpus_path)};
  if (l.corpus.records.empty()) throw Error(ErrorCode::kCorpusEmpty, "corpus is empty");
  return l;
}

void CmdEval(Run& run, const std::string& primary) {
  const Loaded l = LoadModelAndCorpus(run);
  const auto text = EncodeCaptions(l.state.model, l.state.vocab, CorpusCaptions(l.corpus));
  const auto r = EvalRetrieval(text.features, EncodeImages(l.state.model, l.corpus));
  const json j{{"schema", kRetrievalSchema}, {"n_queries", r.n_queries}, {"t2i_r1", r.recall_at_1_t2i},
               {"i2t_r1", r.recall_at_1_i2t}, {"ties_t2i", r.ties_t2i},  {"ties_i2t", r.ties_i2t},
               {"truncated", text.truncated}};
  WriteText(run.Output("retrieval", Primary(primary, "retrieval.json")), j.dump(2) + "\n");
  std::cout << "eval: t2i R@1 " << r.recall_at_1_t2i << ", i2t R@1 " << r.recall_at_1_i2t << " over "
            << r.n_queries << "\n";
}

void CmdProbe(Run& run, const std::string& primary) {
  const Loaded l = LoadModelAndCorpus(run);
  const auto probes = ParseProbeList(Get<std::string>(run.config(), "probes"));
  const auto rows = RunProbeSuite(l.state.model, l.state.vocab, l.corpus, probes);
  const std::string csv = ProbeTableCsv(rows);
  WriteText(run.Output("probes", Primary(primary, "probes.csv")), csv);
  std::cout << csv;
}

void CmdAttn(Run& run, const std::string& primary) {
  const Loaded l = LoadModelAndCorpus(run);
  auto captions = CorpusCaptions(l.corpus);
  const int limit = Get<int>(run.config(), "limit");
  if (limit > 0 && limit < static_cast<int>(captions.size())) captions.resize(static_cast<size_t>(limit));
  const auto profile = ComputeAttentionProfile(l.state.model, l.state.vocab, captions);
  WriteText(run.Output("profile", Primary(primary, "profile.json")), ToJson(profile).dump(2) + "\n");
  std::cout << "attn: " << profile.n_captions << " captions, flatness " << profile.Flatness() << ", argmax "
            << profile.PostSoftmaxArgmax() << "\n";
}

void CmdReport(Run& run, const std::string&) {
  json& c = run.config();
  const auto inputs = Get<std::vector<std::string>>(c, "inputs");
  if (inputs.empty()) throw Error(ErrorCode::kInvalidArgument, "report needs at least one input file");
  std::vector<fs::path> paths;
  for (size_t i = 0; i < inputs.size(); ++i) {
    run.Input("input_" + std::to_string(i), inputs[i]);
    paths.emplace_back(inputs[i]);
  }
  for (const auto& figure : WriteReport(paths, run.dir())) {
    run.Output(figure.stem().string(), figure.filename().string());
    std::cout << "report: " << figure.string() << "\n";
  }
}

using Handler = void (*)(Run&, const std::string&);

const std::map<std::string, Handler>& Handlers() {
  static const std::map<std::string, Handler> h = {
      {"gen", CmdGen},   {"augment", CmdAugment}, {"stretch", CmdStretch}, {"train", CmdTrain},
      {"eval", CmdEval}, {"probe", CmdProbe},     {"attn", CmdAttn},       {"report", CmdReport},
  };
  return h;
}

// Input paths are made absolute so a manifest can be re-run from anywhere.
void NormalizePaths(const std::string& command, json& config) {
  for (const char* key : {"corpus", "checkpoint", "resume", "input"})
    if (config.contains(key) && config[key].is_string()) config[key] = Absolute(config[key].get<std::string>());
  if (command == "report" && config.contains("inputs"))
    for (auto& p : config["inputs"]) p = Absolute(p.get<std::string>());
}

class FlagSet {
 public:
  explicit FlagSet(CLI::App* app) : app_(app) {}

  template <class T>
  void Bind(const std::string& flag, const std::string& pointer, const std::string& help) {
    Custom<T>(flag, help, [pointer](json& j, const T& v) { j[json::json_pointer(pointer)] = v; });
  }

  template <class T>
  void Custom(const std::string& flag, const std::string& help, std::function<void(json&, const T&)> apply) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app_->add_option(flag, *value, help);
    setters_.push_back([opt, value, apply](json& j) {
      if (opt->count() > 0) apply(j, *value);
    });
  }

  void Apply(json& j) const {
    for (const auto& s : setters_) s(j);
  }

 private:
  CLI::App* app_;
  std::vector<std::function<void(json&)>> setters_;
};

struct Command {
  CLI::App* app = nullptr;
  std::unique_ptr<FlagSet> flags;
  std::string out;
  std::string config_file;
  std::string preset;
};

void AddCommon(Command& cmd, const std::string& seed_pointer) {
  cmd.app->add_option("--out", cmd.out, "artifact directory, or a file path for the main artifact");
  cmd.app->add_option("--config", cmd.config_file, "JSON config merged over the defaults (flags win)");
  cmd.flags->Bind<std::uint64_t>("--seed", seed_pointer, "random seed");
}

void DefineGen(Command& cmd) {
  auto& f = *cmd.flags;
  f.Bind<int>("--n", "/n_samples", "number of records");
  f.Bind<int>("--holdout", "/holdout", "extra records written to heldout.jsonl");
  f.Bind<int>("--concepts", "/concepts_per_image", "concepts per image");
  f.Custom<std::string>("--sentences", "sentences per caption, k or min:max", [](json& j, const std::string& v) {
    const auto colon = v.find(':');
    try {
      j["min_sentences"] = std::stoi(v.substr(0, colon));
      j["max_sentences"] = std::stoi(colon == std::string::npos ? v : v.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "bad --sentences '" + v + "'");
    }
  });
  f.Bind<int>("--pool", "/vocab_size", "size of the concept pool");
  f.Bind<int>("--detail-words", "/detail_words_per_concept", "private detail words per concept");
  f.Bind<std::string>("--summary-mode", "/summary_mode", "union | paraphrase_lite");
  f.Bind<double>("--noise", "/image_noise_sigma", "image noise standard deviation");
  f.Bind<int>("--image-dim", "/image_dim", "image feature dimension");
}

void DefineAugment(Command& cmd) {
  auto& f = *cmd.flags;
  f.Bind<std::string>("--corpus", "/corpus", "corpus file");
  f.Bind<std::string>("--strategy", "/strategy",
                      "random|debias|ordered|independent[:p]|keep_n[:n]|shuffle|longclip|smartclip");
  f.Bind<double>("--p", "/p", "inclusion probability for independent");
  f.Bind<int>("--n", "/n", "sample size for keep_n");
  f.Bind<std::string>("--padding", "/padding", "none|random|fixed:n|pre_sot");
  f.Bind<int>("--context", "/context_length", "token context length");
  f.Bind<int>("--preview", "/preview", "records to render (<= 0 renders all)");
}

void DefineStretch(Command& cmd) {
  auto& f = *cmd.flags;
  f.Bind<std::string>("--input", "/input", "source table JSON (random table when omitted)");
  f.Bind<int>("--rows", "/rows", "rows of the random source table");
  f.Bind<int>("--dim", "/dim", "width of the random source table");
  f.Bind<int>("--freeze", "/freeze", "rows copied verbatim");
  f.Bind<int>("--factor", "/factor", "stretch factor");
  f.Bind<bool>("--all", "/all", "interpolate every row (nothing frozen)");
}

void DefineTrain(Command& cmd) {
  auto& f = *cmd.flags;
  cmd.app->add_option("--preset", cmd.preset, "desk | paper base defaults");
  f.Bind<std::string>("--corpus", "/corpus", "training corpus");
  f.Bind<std::string>("--resume", "/resume", "checkpoint to continue from");
  f.Bind<int>("--stop-after-step", "/stop_after_step", "stop once this global step is done (< 0 runs to the end)");
  f.Bind<std::string>("--mode", "/train/mode", "longclip_baseline | debias | custom");
  f.Bind<double>("--lambda-short", "/train/loss/lambda_short", "weight of the short-caption loss");
  f.Bind<bool>("--weighted", "/train/loss/weighted", "weighted loss (custom mode)");
  f.Bind<int>("--pca-rank", "/train/loss/pca_rank", "PCA rank for the short-caption image features");
  f.Bind<bool>("--pca-renormalize", "/train/loss/pca_renormalize", "renormalize PCA reconstructions");
  f.Bind<std::string>("--strategy", "/train/augment/strategy", "sentence sampling (custom mode)");
  f.Bind<std::string>("--padding", "/train/augment/padding", "padding redistribution (custom mode)");
  f.Bind<int>("--epochs", "/train/epochs", "epochs");
  f.Bind<int>("--batch-size", "/train/batch_size", "batch size");
  f.Bind<int>("--warmup", "/train/warmup_iters", "linear warmup steps");
  f.Bind<double>("--lr", "/train/learning_rate", "peak learning rate");
  f.Bind<double>("--weight-decay", "/train/weight_decay", "AdamW weight decay");
  f.Bind<int>("--layers", "/train/text/layers", "text transformer layers");
  f.Bind<int>("--heads", "/train/text/heads", "attention heads");
  f.Bind<int>("--model-dim", "/train/text/model_dim", "text model width");
  f.Bind<int>("--ff-dim", "/train/text/ff_dim", "feed-forward width");
  f.Bind<int>("--output-dim", "/train/text/output_dim", "joint embedding width");
  f.Bind<std::string>("--pooling", "/train/text/pooling", "eot | avg");
  f.Bind<int>("--base-context", "/train/text/base_context", "positional rows before stretching");
  f.Bind<bool>("--stretch", "/train/text/stretch", "stretch the positional table");
  f.Bind<bool>("--stretch-all", "/train/text/stretch_all", "interpolate every positional row");
  f.Bind<int>("--stretch-freeze", "/train/text/stretch_freeze", "rows kept verbatim");
  f.Bind<int>("--stretch-factor", "/train/text/stretch_factor", "stretch factor");
  f.Bind<bool>("--freeze-prefix", "/train/text/freeze_prefix", "keep the verbatim rows frozen during training");
  f.Bind<int>("--image-hidden", "/train/image/hidden_dim", "image encoder hidden width");
}

void DefineModelInputs(Command& cmd) {
  cmd.flags->Bind<std::string>("--checkpoint", "/checkpoint", "trained checkpoint");
  cmd.flags->Bind<std::string>("--corpus", "/corpus", "evaluation corpus");
}

fs::path DefaultOutRoot() {
  const char* root = std::getenv("DEBIAS_OUT_ROOT");
  return root != nullptr && *root != '\0' ? fs::path(root) : fs::path("runs");
}

}  // namespace

json DefaultConfig(const std::string& command, const std::string& preset) {
  if (command == "gen") {
    const SyntheticCorpusSpec s;
    return json{{"n_samples", s.n_samples},
                {"holdout", 0},
                {"concepts_per_image", s.concepts_per_image},
                {"min_sentences", s.min_sentences},
                {"max_sentences", s.max_sentences},
                {"vocab_size", s.vocab_size},
                {"detail_words_per_concept", s.detail_words_per_concept},
                {"summary_mode", ToString(s.summary_mode)},
                {"image_noise_sigma", s.image_noise_sigma},
                {"image_dim", s.image_dim},
                {"seed", 0}};
  }
  if (command == "augment")
    return json{{"corpus", ""},   {"strategy", "random"}, {"p", 0.5},     {"n", 4},
                {"padding", "random"}, {"context_length", StretchedLength(kBaseContext, kDefaultFreeze, kDefaultStretchFactor)},
                {"preview", 5}, {"seed", 0}};
  if (command == "stretch")
    return json{{"input", ""}, {"rows", kBaseContext}, {"dim", 64}, {"freeze", kDefaultFreeze},
                {"factor", kDefaultStretchFactor}, {"all", false}, {"seed", 0}};
  if (command == "train") {
    const TrainConfig cfg = PresetConfig(preset);
    return json{{"preset", preset},          {"corpus", ""}, {"resume", ""}, {"stop_after_step", -1},
                {"seed", cfg.seed}, {"train", ToJson(cfg)}};
  }
  if (command == "eval" || command == "attn" || command == "probe") {
    json j{{"checkpoint", ""}, {"corpus", ""}, {"seed", 0}};
    if (command == "probe") j["probes"] = "keep,move:1:4,remove_first,pad:3";
    if (command == "attn") j["limit"] = 0;
    return j;
  }
  if (command == "report") return json{{"inputs", json::array()}, {"seed", 0}};
  throw Error(ErrorCode::kInvalidArgument, "unknown command '" + command + "'");
}

json Execute(const std::string& command, const json& config, const fs::path& out_dir, const std::string& primary) {
  const auto it = Handlers().find(command);
  if (it == Handlers().end()) throw Error(ErrorCode::kInvalidArgument, "unknown command '" + command + "'");
  json effective = config;
  NormalizePaths(command, effective);
  // The train seed lives inside the training config; mirror it at the top.
  if (command == "train") effective["seed"] = effective.at("train").at("seed");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + out_dir.string() + ": " + ec.message());
  const fs::path manifest = out_dir / kManifestName;
  if (fs::exists(manifest)) {
    const auto previous = ReadJson(manifest).value("command", "");
    if (previous != command)
      throw Error(ErrorCode::kInvalidArgument,
                  out_dir.string() + " already holds a '" + previous + "' run; pick another --out");
  }
  Run run(command, std::move(effective), out_dir);
  it->second(run, primary);
  return run.Finish();
}

std::vector<std::string> Rerun(const fs::path& manifest_path, const fs::path& out_dir) {
  const json m = ReadJson(manifest_path);
  if (m.value("schema", "") != kManifestSchema)
    throw Error(ErrorCode::kParse, manifest_path.string() + " is not a " + std::string(kManifestSchema) + " file");
  for (const auto& [name, in] : m.at("inputs").items()) {
    const auto path = in.at("path").get<std::string>();
    if (HashFile(path) != in.at("hash").get<std::string>())
      throw Error(ErrorCode::kResumeMismatch, "input '" + name + "' (" + path + ") changed since the recorded run");
  }
  std::string primary;
  for (const char* key : {"corpus", "preview", "table", "retrieval", "probes", "profile"})
    if (m.at("outputs").contains(key)) primary = m["outputs"][key].at("file").get<std::string>();
  if (fs::exists(out_dir) && fs::equivalent(out_dir, manifest_path.parent_path()))
    throw Error(ErrorCode::kInvalidArgument, "rerun output must differ from the recorded directory");

  const json fresh = Execute(m.at("command").get<std::string>(), m.at("config"), out_dir, primary);
  std::vector<std::string> differing;
  for (const auto& [name, out] : m.at("outputs").items()) {
    const bool same = fresh.at("outputs").contains(name) && fresh["outputs"][name].at("hash") == out.at("hash");
    std::cout << "rerun: " << name << " " << (same ? "identical" : "DIFFERS") << "\n";
    if (!same) differing.push_back(name);
  }
  return differing;
}

int Main(int argc, char** argv) {
  CLI::App app{"Long-caption dual encoder toolkit: corpus generation, augmentation, training, probing"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  const std::map<std::string, std::string> about = {
      {"gen", "generate a synthetic summary-first caption corpus"},
      {"augment", "preview short-caption training samples"},
      {"stretch", "stretch a positional embedding table"},
      {"train", "train the dual encoder"},
      {"eval", "long-caption retrieval recall@1"},
      {"probe", "sentence-order probe battery"},
      {"attn", "EOT attention profile"},
      {"report", "SVG figures from emitted CSV/JSON files"},
  };
  std::map<std::string, Command> commands;
  for (const auto& [name, help] : about) {
    Command& cmd = commands[name];
    cmd.app = app.add_subcommand(name, help);
    cmd.flags = std::make_unique<FlagSet>(cmd.app);
    AddCommon(cmd, name == "train" ? "/train/seed" : "/seed");
  }
  DefineGen(commands["gen"]);
  DefineAugment(commands["augment"]);
  DefineStretch(commands["stretch"]);
  DefineTrain(commands["train"]);
  for (const char* name : {"eval", "probe", "attn"}) DefineModelInputs(commands[name]);
  commands["probe"].flags->Bind<std::string>("--probes", "/probes", "comma-separated probes (step+step...)");
  commands["attn"].flags->Bind<int>("--limit", "/limit", "captions to profile (<= 0 uses all)");
  commands["report"].flags->Bind<std::vector<std::string>>("inputs", "/inputs", "probes.csv, profile.json or metrics.jsonl");

  std::string rerun_manifest;
  std::string rerun_out;
  CLI::App* rerun = app.add_subcommand("rerun", "re-execute a manifest and verify byte-identical artifacts");
  rerun->add_option("--manifest", rerun_manifest, "manifest.json of a previous run")->required();
  rerun->add_option("--out", rerun_out, "directory for the fresh artifacts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (rerun->parsed()) {
      const fs::path manifest(rerun_manifest);
      const fs::path out = rerun_out.empty() ? manifest.parent_path() / "rerun" : fs::path(rerun_out);
      return Rerun(manifest, out).empty() ? kExitOk : kExitReproMismatch;
    }
    for (auto& [name, cmd] : commands) {
      if (!cmd.app->parsed()) continue;
      json file = json::object();
      if (!cmd.config_file.empty()) file = ReadJson(cmd.config_file);
      std::string preset = cmd.preset;
      if (preset.empty()) preset = file.value("preset", "desk");
      json config = DefaultConfig(name, preset);
      config.merge_patch(file);
      config["preset"] = preset;
      if (name != "train") config.erase("preset");
      cmd.flags->Apply(config);

      fs::path out_dir = cmd.out.empty() ? DefaultOutRoot() / name : fs::path(cmd.out);
      std::string primary;
      if (!cmd.out.empty() && out_dir.has_extension() && name != "train" && name != "report") {
        primary = out_dir.filename().string();
        out_dir = out_dir.has_parent_path() ? out_dir.parent_path() : fs::path(".");
      }
      Execute(name, config, out_dir, primary);
      std::cout << "artifacts: " << out_dir.string() << "\n";
    }
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitErrorBase + static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace debias::cli
