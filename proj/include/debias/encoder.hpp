#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "debias/params.hpp"
#include "debias/pos_embed.hpp"
#include "debias/text.hpp"

namespace debias {

enum class Pooling { kEot, kAverage };

std::string ToString(Pooling p);
Pooling ParsePooling(std::string_view text);

struct TextEncoderConfig {
  int layers = 2;
  int heads = 4;
  int model_dim = 64;
  int ff_dim = 128;
  int output_dim = 32;
  int vocab_size = 0;
  Pooling pooling = Pooling::kEot;

  // Positional table geometry: a base_context table is built and, when
  // stretch is on, interpolated to freeze + factor * (base - freeze) rows.
  int base_context = kBaseContext;
  bool stretch = true;
  bool stretch_all = false;
  int stretch_freeze = kDefaultFreeze;
  int stretch_factor = kDefaultStretchFactor;
  // Keep the frozen prefix fixed for the whole run.
  bool freeze_prefix = true;

  int context_length() const;
  int frozen_rows() const;
  void Validate() const;
};

struct ImageEncoderConfig {
  int input_dim = 64;
  int hidden_dim = 64;
};

// Head-averaged last-layer attention row of the pooled (EOT) position.
struct AttentionCapture {
  // q_EOT K^T / sqrt(d_head) per position; -inf past eot_index.
  std::vector<double> pre_softmax;
  // Softmax of the above; zero past eot_index.
  std::vector<double> post_softmax;
  int sot_index = 0;
  int eot_index = 0;
};

struct LayerCache {
  Eigen::MatrixXd x_in, ln1_hat, ln1_out, qkv, attn_out, x_mid, ln2_hat, ln2_out, ff_pre, ff_act;
  Eigen::VectorXd ln1_rstd, ln2_rstd;
  std::vector<Eigen::MatrixXd> probs;  // per head, T x T
};

struct TextCache {
  std::vector<int> ids;  // first T ids
  int pool_begin = 0;
  int pool_end = 0;  // inclusive
  std::vector<LayerCache> layers;
  Eigen::MatrixXd x_final;   // pooled rows after the final layer norm
  Eigen::MatrixXd lnf_hat;   // normalized (pre-gain) pooled rows
  Eigen::VectorXd lnf_rstd;  // per pooled row
  Eigen::RowVectorXd pooled;
  Eigen::RowVectorXd raw;  // pooled * proj, before normalization
  double raw_norm = 0.0;
};

struct TextOutput {
  Eigen::RowVectorXd feature;
  std::optional<AttentionCapture> attention;
  TextCache cache;
};

struct ImageCache {
  Eigen::RowVectorXd x, pre, act, raw;
  double raw_norm = 0.0;
};

struct ImageOutput {
  Eigen::RowVectorXd feature;
  ImageCache cache;
};

// Toy CLIP-style dual encoder: a causal pre-LN text transformer pooled at EOT
// (or averaged over SOT..EOT), a two-layer image projector and a learnable
// log inverse temperature.
class DualEncoder {
 public:
  DualEncoder(const TextEncoderConfig& text, const ImageEncoderConfig& image, std::uint64_t seed);

  const TextEncoderConfig& text_config() const { return text_cfg_; }
  const ImageEncoderConfig& image_config() const { return image_cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Forward pass over positions [0, eot_index]; later positions cannot
  // influence the pooled output under the causal mask.
  TextOutput EncodeText(const TokenSequence& seq, bool capture_attention = false) const;
  void BackwardText(const TextCache& cache, const Eigen::RowVectorXd& d_feature, Gradients& grads) const;

  ImageOutput EncodeImage(std::span<const double> x) const;
  void BackwardImage(const ImageCache& cache, const Eigen::RowVectorXd& d_feature, Gradients& grads) const;

  // Residual stream after the last block for every position (full context).
  Eigen::MatrixXd HiddenStates(const TokenSequence& seq) const;

  double inv_temperature() const;
  int logit_scale_index() const { return logit_scale_; }
  int positional_index() const { return pos_; }
  PositionalTable positional_table() const;

  static constexpr double kInitInvTemperature = 14.3;
  static constexpr double kMaxInvTemperature = 100.0;

 private:
  struct LayerParams {
    int ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_1, b_1, w_2, b_2;
  };

  void CheckSequence(const TokenSequence& seq) const;
  Eigen::MatrixXd Embed(const std::vector<int>& ids) const;
  Eigen::MatrixXd RunLayer(const LayerParams& lp, const Eigen::MatrixXd& x, LayerCache& cache) const;
  Eigen::MatrixXd BackLayer(const LayerParams& lp, const LayerCache& cache, const Eigen::MatrixXd& d_out,
                            Gradients& grads) const;

  TextEncoderConfig text_cfg_;
  ImageEncoderConfig image_cfg_;
  ParameterSet params_;
  int tok_ = 0, pos_ = 0, lnf_g_ = 0, lnf_b_ = 0, proj_ = 0;
  std::vector<LayerParams> layers_;
  int img_w1_ = 0, img_b1_ = 0, img_w2_ = 0, img_b2_ = 0;
  int logit_scale_ = 0;
};

}  // namespace debias
