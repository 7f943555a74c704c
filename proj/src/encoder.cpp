#include "debias/encoder.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "debias/error.hpp"
#include "debias/rng.hpp"

namespace debias {
namespace {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

constexpr double kLnEps = 1e-5;
constexpr double kGeluAlpha = 1.702;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

MatrixXd Gaussian(int rows, int cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  MatrixXd m(rows, cols);
  // Row-major fill order so shapes, not storage layout, fix the stream.
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

void LayerNormForward(const MatrixXd& x, const RowVectorXd& gain, const RowVectorXd& bias, MatrixXd& hat,
                      VectorXd& rstd, MatrixXd& out) {
  const auto n = static_cast<double>(x.cols());
  hat.resize(x.rows(), x.cols());
  rstd.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).sum() / n;
    const double var = (x.row(r).array() - mean).square().sum() / n;
    rstd(r) = 1.0 / std::sqrt(var + kLnEps);
    hat.row(r) = (x.row(r).array() - mean) * rstd(r);
  }
  out = (hat.array().rowwise() * gain.array()).rowwise() + bias.array();
}

MatrixXd LayerNormBackward(const MatrixXd& d_out, const MatrixXd& hat, const VectorXd& rstd, const RowVectorXd& gain,
                           MatrixXd& d_gain, MatrixXd& d_bias) {
  d_gain += d_out.cwiseProduct(hat).colwise().sum();
  d_bias += d_out.colwise().sum();
  const MatrixXd d_hat = d_out.array().rowwise() * gain.array();
  const auto n = static_cast<double>(hat.cols());
  MatrixXd d_x(hat.rows(), hat.cols());
  for (Eigen::Index r = 0; r < hat.rows(); ++r) {
    const double mean_d = d_hat.row(r).sum() / n;
    const double mean_dh = d_hat.row(r).dot(hat.row(r)) / n;
    d_x.row(r) = rstd(r) * (d_hat.row(r).array() - mean_d - hat.row(r).array() * mean_dh);
  }
  return d_x;
}

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// x * sigmoid(1.702 x)
MatrixXd QuickGelu(const MatrixXd& x) {
  return x.unaryExpr([](double v) { return v * Sigmoid(kGeluAlpha * v); });
}

MatrixXd QuickGeluGrad(const MatrixXd& x) {
  return x.unaryExpr([](double v) {
    const double s = Sigmoid(kGeluAlpha * v);
    return s + kGeluAlpha * v * s * (1.0 - s);
  });
}

}  // namespace

std::string ToString(Pooling p) { return p == Pooling::kEot ? "eot" : "average"; }

Pooling ParsePooling(std::string_view text) {
  if (text == "eot") return Pooling::kEot;
  if (text == "average" || text == "avg") return Pooling::kAverage;
  throw Error(ErrorCode::kInvalidArgument, "unknown pooling '" + std::string(text) + "'");
}

int TextEncoderConfig::context_length() const {
  if (!stretch) return base_context;
  if (stretch_all) return base_context * stretch_factor;
  return StretchedLength(base_context, stretch_freeze, stretch_factor);
}

int TextEncoderConfig::frozen_rows() const {
  return (stretch && !stretch_all && freeze_prefix) ? stretch_freeze : 0;
}

void TextEncoderConfig::Validate() const {
  if (layers < 1 || heads < 1 || model_dim < 1 || ff_dim < 1 || output_dim < 1)
    throw Error(ErrorCode::kInvalidArgument, "encoder dimensions must be positive");
  if (model_dim % heads != 0) throw Error(ErrorCode::kInvalidArgument, "model_dim must be divisible by heads");
  if (vocab_size <= Vocabulary::kNumReserved) throw Error(ErrorCode::kInvalidArgument, "vocabulary too small");
  if (base_context < 3) throw Error(ErrorCode::kInvalidArgument, "base context must be >= 3");
  if (stretch && !stretch_all && (stretch_freeze < 0 || stretch_freeze >= base_context))
    throw Error(ErrorCode::kInvalidArgument, "stretch_freeze must be in [0, base_context)");
  if (stretch && stretch_factor < 1) throw Error(ErrorCode::kInvalidArgument, "stretch_factor must be >= 1");
}

DualEncoder::DualEncoder(const TextEncoderConfig& text, const ImageEncoderConfig& image, std::uint64_t seed)
    : text_cfg_(text), image_cfg_(image) {
  text_cfg_.Validate();
  if (image_cfg_.input_dim < 1 || image_cfg_.hidden_dim < 1)
    throw Error(ErrorCode::kInvalidArgument, "image encoder dimensions must be positive");

  Rng rng(SplitMix64(seed));
  const int d = text_cfg_.model_dim;
  const int f = text_cfg_.ff_dim;
  const double resid_scale = 1.0 / std::sqrt(2.0 * text_cfg_.layers);

  tok_ = params_.Add("text.token_embedding", Gaussian(text_cfg_.vocab_size, d, 0.02, rng));
  MatrixXd base = Gaussian(text_cfg_.base_context, d, 0.01, rng);
  PositionalTable table;
  if (!text_cfg_.stretch) {
    table.embeddings = base;
  } else if (text_cfg_.stretch_all) {
    table = StretchAll(base, text_cfg_.stretch_factor);
  } else {
    table = Stretch(base, text_cfg_.stretch_freeze, text_cfg_.stretch_factor, -1);
  }
  pos_ = params_.Add("text.positional_embedding", table.embeddings, true, text_cfg_.frozen_rows());

  for (int l = 0; l < text_cfg_.layers; ++l) {
    const std::string p = "text.layer" + std::to_string(l) + ".";
    LayerParams lp{};
    lp.ln1_g = params_.Add(p + "ln1.gain", MatrixXd::Ones(1, d), false);
    lp.ln1_b = params_.Add(p + "ln1.bias", MatrixXd::Zero(1, d), false);
    lp.w_qkv = params_.Add(p + "attn.w_qkv", Gaussian(d, 3 * d, 1.0 / std::sqrt(d), rng));
    lp.b_qkv = params_.Add(p + "attn.b_qkv", MatrixXd::Zero(1, 3 * d), false);
    lp.w_o = params_.Add(p + "attn.w_out", Gaussian(d, d, resid_scale / std::sqrt(d), rng));
    lp.b_o = params_.Add(p + "attn.b_out", MatrixXd::Zero(1, d), false);
    lp.ln2_g = params_.Add(p + "ln2.gain", MatrixXd::Ones(1, d), false);
    lp.ln2_b = params_.Add(p + "ln2.bias", MatrixXd::Zero(1, d), false);
    lp.w_1 = params_.Add(p + "mlp.w_1", Gaussian(d, f, 1.0 / std::sqrt(d), rng));
    lp.b_1 = params_.Add(p + "mlp.b_1", MatrixXd::Zero(1, f), false);
    lp.w_2 = params_.Add(p + "mlp.w_2", Gaussian(f, d, resid_scale / std::sqrt(f), rng));
    lp.b_2 = params_.Add(p + "mlp.b_2", MatrixXd::Zero(1, d), false);
    layers_.push_back(lp);
  }
  lnf_g_ = params_.Add("text.ln_final.gain", MatrixXd::Ones(1, d), false);
  lnf_b_ = params_.Add("text.ln_final.bias", MatrixXd::Zero(1, d), false);
  proj_ = params_.Add("text.projection", Gaussian(d, text_cfg_.output_dim, 1.0 / std::sqrt(d), rng));

  const int in = image_cfg_.input_dim;
  const int hid = image_cfg_.hidden_dim;
  img_w1_ = params_.Add("image.w_1", Gaussian(in, hid, 1.0 / std::sqrt(in), rng));
  img_b1_ = params_.Add("image.b_1", MatrixXd::Zero(1, hid), false);
  img_w2_ = params_.Add("image.w_2", Gaussian(hid, text_cfg_.output_dim, 1.0 / std::sqrt(hid), rng));
  img_b2_ = params_.Add("image.b_2", Gaussian(1, text_cfg_.output_dim, 0.02, rng), false);

  logit_scale_ = params_.Add("logit_scale", MatrixXd::Constant(1, 1, std::log(kInitInvTemperature)), false);
}

double DualEncoder::inv_temperature() const { return std::exp(params_.value(logit_scale_)(0, 0)); }

PositionalTable DualEncoder::positional_table() const {
  PositionalTable t;
  t.embeddings = params_.value(pos_);
  t.frozen_prefix = params_.entry(pos_).frozen_rows;
  t.stretch_factor = text_cfg_.stretch ? text_cfg_.stretch_factor : 1;
  return t;
}

void DualEncoder::CheckSequence(const TokenSequence& seq) const {
  if (seq.context_length() != text_cfg_.context_length())
    throw Error(ErrorCode::kContextOverflow, "sequence length " + std::to_string(seq.context_length()) +
                                                 " != context " + std::to_string(text_cfg_.context_length()));
  if (seq.eot_index < 0 || seq.eot_index >= seq.context_length() || seq.sot_index > seq.eot_index)
    throw Error(ErrorCode::kInvalidArgument, "sequence special-token indices out of range");
  for (int id : seq.ids)
    if (id < 0 || id >= text_cfg_.vocab_size) throw Error(ErrorCode::kInvalidArgument, "token id out of vocabulary");
}

MatrixXd DualEncoder::Embed(const std::vector<int>& ids) const {
  const auto& tok = params_.value(tok_);
  const auto& pos = params_.value(pos_);
  MatrixXd x(static_cast<Eigen::Index>(ids.size()), text_cfg_.model_dim);
  for (size_t t = 0; t < ids.size(); ++t) {
    const auto r = static_cast<Eigen::Index>(t);
    x.row(r) = tok.row(ids[t]) + pos.row(r);
  }
  return x;
}

MatrixXd DualEncoder::RunLayer(const LayerParams& lp, const MatrixXd& x, LayerCache& c) const {
  const Eigen::Index t = x.rows();
  const int d = text_cfg_.model_dim;
  const int dh = d / text_cfg_.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  c.x_in = x;
  LayerNormForward(x, params_.value(lp.ln1_g), params_.value(lp.ln1_b), c.ln1_hat, c.ln1_rstd, c.ln1_out);
  c.qkv = (c.ln1_out * params_.value(lp.w_qkv)).rowwise() + RowVectorXd(params_.value(lp.b_qkv));

  c.attn_out.resize(t, d);
  c.probs.resize(static_cast<size_t>(text_cfg_.heads));
  for (int h = 0; h < text_cfg_.heads; ++h) {
    const auto q = c.qkv.middleCols(h * dh, dh);
    const auto k = c.qkv.middleCols(d + h * dh, dh);
    const auto v = c.qkv.middleCols(2 * d + h * dh, dh);
    MatrixXd s = (q * k.transpose()) * scale;
    MatrixXd& p = c.probs[static_cast<size_t>(h)];
    p = MatrixXd::Zero(t, t);
    for (Eigen::Index i = 0; i < t; ++i) {
      const double mx = s.row(i).head(i + 1).maxCoeff();
      double z = 0.0;
      for (Eigen::Index j = 0; j <= i; ++j) {
        p(i, j) = std::exp(s(i, j) - mx);
        z += p(i, j);
      }
      p.row(i).head(i + 1) /= z;
    }
    c.attn_out.middleCols(h * dh, dh) = p * v;
  }
  c.x_mid = x + ((c.attn_out * params_.value(lp.w_o)).rowwise() + RowVectorXd(params_.value(lp.b_o)));

  LayerNormForward(c.x_mid, params_.value(lp.ln2_g), params_.value(lp.ln2_b), c.ln2_hat, c.ln2_rstd, c.ln2_out);
  c.ff_pre = (c.ln2_out * params_.value(lp.w_1)).rowwise() + RowVectorXd(params_.value(lp.b_1));
  c.ff_act = QuickGelu(c.ff_pre);
  return c.x_mid + ((c.ff_act * params_.value(lp.w_2)).rowwise() + RowVectorXd(params_.value(lp.b_2)));
}

MatrixXd DualEncoder::BackLayer(const LayerParams& lp, const LayerCache& c, const MatrixXd& d_out,
                                Gradients& g) const {
  const int d = text_cfg_.model_dim;
  const int dh = d / text_cfg_.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // MLP branch.
  g[lp.w_2] += c.ff_act.transpose() * d_out;
  g[lp.b_2] += d_out.colwise().sum();
  const MatrixXd d_pre = (d_out * params_.value(lp.w_2).transpose()).cwiseProduct(QuickGeluGrad(c.ff_pre));
  g[lp.w_1] += c.ln2_out.transpose() * d_pre;
  g[lp.b_1] += d_pre.colwise().sum();
  const MatrixXd d_ln2 = d_pre * params_.value(lp.w_1).transpose();
  MatrixXd d_mid = d_out + LayerNormBackward(d_ln2, c.ln2_hat, c.ln2_rstd, params_.value(lp.ln2_g), g[lp.ln2_g],
                                             g[lp.ln2_b]);

  // Attention branch.
  g[lp.w_o] += c.attn_out.transpose() * d_mid;
  g[lp.b_o] += d_mid.colwise().sum();
  const MatrixXd d_attn = d_mid * params_.value(lp.w_o).transpose();
  MatrixXd d_qkv(c.qkv.rows(), c.qkv.cols());
  for (int h = 0; h < text_cfg_.heads; ++h) {
    const auto q = c.qkv.middleCols(h * dh, dh);
    const auto k = c.qkv.middleCols(d + h * dh, dh);
    const auto v = c.qkv.middleCols(2 * d + h * dh, dh);
    const MatrixXd& p = c.probs[static_cast<size_t>(h)];
    const auto d_o = d_attn.middleCols(h * dh, dh);
    const MatrixXd d_p = d_o * v.transpose();
    d_qkv.middleCols(2 * d + h * dh, dh) = p.transpose() * d_o;
    const Eigen::VectorXd row_dot = d_p.cwiseProduct(p).rowwise().sum();
    const MatrixXd d_s = (p.array() * (d_p.colwise() - row_dot).array()).matrix() * scale;
    d_qkv.middleCols(h * dh, dh) = d_s * k;
    d_qkv.middleCols(d + h * dh, dh) = d_s.transpose() * q;
  }
  g[lp.w_qkv] += c.ln1_out.transpose() * d_qkv;
  g[lp.b_qkv] += d_qkv.colwise().sum();
  const MatrixXd d_ln1 = d_qkv * params_.value(lp.w_qkv).transpose();
  return d_mid + LayerNormBackward(d_ln1, c.ln1_hat, c.ln1_rstd, params_.value(lp.ln1_g), g[lp.ln1_g], g[lp.ln1_b]);
}

TextOutput DualEncoder::EncodeText(const TokenSequence& seq, bool capture_attention) const {
  CheckSequence(seq);
  TextOutput out;
  TextCache& c = out.cache;
  const int t = seq.eot_index + 1;
  c.ids.assign(seq.ids.begin(), seq.ids.begin() + t);
  c.pool_end = seq.eot_index;
  c.pool_begin = text_cfg_.pooling == Pooling::kEot ? seq.eot_index : seq.sot_index;

  MatrixXd x = Embed(c.ids);
  c.layers.resize(layers_.size());
  for (size_t l = 0; l < layers_.size(); ++l) x = RunLayer(layers_[l], x, c.layers[l]);

  const MatrixXd rows = x.middleRows(c.pool_begin, c.pool_end - c.pool_begin + 1);
  LayerNormForward(rows, params_.value(lnf_g_), params_.value(lnf_b_), c.lnf_hat, c.lnf_rstd, c.x_final);
  c.pooled = c.x_final.colwise().mean();
  c.raw = c.pooled * params_.value(proj_);
  c.raw_norm = c.raw.norm();
  out.feature = c.raw / c.raw_norm;

  if (capture_attention) {
    const int ctx = seq.context_length();
    const int d = text_cfg_.model_dim;
    const int dh = d / text_cfg_.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const LayerCache& last = c.layers.back();
    AttentionCapture cap;
    cap.sot_index = seq.sot_index;
    cap.eot_index = seq.eot_index;
    cap.pre_softmax.assign(static_cast<size_t>(ctx), kNegInf);
    cap.post_softmax.assign(static_cast<size_t>(ctx), 0.0);
    const int e = seq.eot_index;
    for (int j = 0; j <= e; ++j) {
      double pre = 0.0;
      double post = 0.0;
      for (int h = 0; h < text_cfg_.heads; ++h) {
        pre += last.qkv.row(e).segment(h * dh, dh).dot(last.qkv.row(j).segment(d + h * dh, dh)) * scale;
        post += last.probs[static_cast<size_t>(h)](e, j);
      }
      cap.pre_softmax[static_cast<size_t>(j)] = pre / text_cfg_.heads;
      cap.post_softmax[static_cast<size_t>(j)] = post / text_cfg_.heads;
    }
    out.attention = std::move(cap);
  }
  return out;
}

void DualEncoder::BackwardText(const TextCache& c, const RowVectorXd& d_feature, Gradients& g) const {
  const RowVectorXd feature = c.raw / c.raw_norm;
  const RowVectorXd d_raw = (d_feature - feature * feature.dot(d_feature)) / c.raw_norm;
  g[proj_] += c.pooled.transpose() * d_raw;
  const RowVectorXd d_pooled = d_raw * params_.value(proj_).transpose();
  const auto n_rows = c.x_final.rows();
  const MatrixXd d_rows = d_pooled.replicate(n_rows, 1) / static_cast<double>(n_rows);
  const MatrixXd d_pool_in =
      LayerNormBackward(d_rows, c.lnf_hat, c.lnf_rstd, params_.value(lnf_g_), g[lnf_g_], g[lnf_b_]);

  MatrixXd d_x = MatrixXd::Zero(static_cast<Eigen::Index>(c.ids.size()), text_cfg_.model_dim);
  d_x.middleRows(c.pool_begin, n_rows) = d_pool_in;
  for (size_t l = layers_.size(); l-- > 0;) d_x = BackLayer(layers_[l], c.layers[l], d_x, g);

  for (size_t t = 0; t < c.ids.size(); ++t) {
    const auto r = static_cast<Eigen::Index>(t);
    g[tok_].row(c.ids[t]) += d_x.row(r);
    g[pos_].row(r) += d_x.row(r);
  }
}

Eigen::MatrixXd DualEncoder::HiddenStates(const TokenSequence& seq) const {
  CheckSequence(seq);
  MatrixXd x = Embed(seq.ids);
  LayerCache scratch;
  for (const auto& lp : layers_) x = RunLayer(lp, x, scratch);
  return x;
}

ImageOutput DualEncoder::EncodeImage(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != image_cfg_.input_dim)
    throw Error(ErrorCode::kShapeMismatch, "image vector has " + std::to_string(x.size()) + " entries, expected " +
                                               std::to_string(image_cfg_.input_dim));
  ImageOutput out;
  ImageCache& c = out.cache;
  c.x = Eigen::Map<const RowVectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  c.pre = c.x * params_.value(img_w1_) + RowVectorXd(params_.value(img_b1_));
  c.act = QuickGelu(c.pre);
  c.raw = c.act * params_.value(img_w2_) + RowVectorXd(params_.value(img_b2_));
  c.raw_norm = c.raw.norm();
  out.feature = c.raw / c.raw_norm;
  return out;
}

void DualEncoder::BackwardImage(const ImageCache& c, const RowVectorXd& d_feature, Gradients& g) const {
  const RowVectorXd feature = c.raw / c.raw_norm;
  const RowVectorXd d_raw = (d_feature - feature * feature.dot(d_feature)) / c.raw_norm;
  g[img_w2_] += c.act.transpose() * d_raw;
  g[img_b2_] += d_raw;
  const RowVectorXd d_pre = (d_raw * params_.value(img_w2_).transpose()).cwiseProduct(QuickGeluGrad(c.pre));
  g[img_w1_] += c.x.transpose() * d_pre;
  g[img_b1_] += d_pre;
}

}  // namespace debias
