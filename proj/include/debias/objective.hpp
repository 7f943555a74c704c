#pragma once

#include <Eigen/Dense>

namespace debias {

struct LossConfig {
  // Weight of the short-caption term; the long term gets 1 - lambda_short.
  double lambda_short = 0.1;
  // false: unweighted L = L^s + L^l (Long-CLIP baseline).
  bool weighted = true;
  int pca_rank = 8;
  bool pca_renormalize = true;
  double init_inv_temperature = 14.3;
  double max_inv_temperature = 100.0;

  void Validate() const;
};

// Row-wise cross-entropy of the scaled similarity matrix against its diagonal:
//   -1/N sum_i log softmax_j(<a_i, b_j> / tau)[i]
double ContrastiveLoss(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double tau);

struct ContrastiveGrad {
  double loss = 0.0;
  Eigen::MatrixXd d_a;
  Eigen::MatrixXd d_b;
  double d_inv_temperature = 0.0;
};

ContrastiveGrad ContrastiveLossGrad(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double inv_temperature);

// Mean and top principal directions of a batch (rows are samples).
struct PcaBasis {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd components;   // D x r, orthonormal columns, leading first
  Eigen::VectorXd eigenvalues;  // all D covariance eigenvalues, descending
};

PcaBasis ComputePcaBasis(const Eigen::MatrixXd& v, int rank);

// Centered projection onto the basis, mean added back, rows optionally
// rescaled to unit norm.
Eigen::MatrixXd PcaProject(const Eigen::MatrixXd& v, const PcaBasis& basis, bool renormalize);

// Backward of PcaProject with the principal directions held constant.
Eigen::MatrixXd PcaProjectBackward(const Eigen::MatrixXd& v, const PcaBasis& basis, bool renormalize,
                                   const Eigen::MatrixXd& d_out);

Eigen::MatrixXd PcaReconstruct(const Eigen::MatrixXd& v, int rank, bool renormalize = true);

struct LossTerms {
  double total = 0.0;
  double loss_short = 0.0;
  double loss_long = 0.0;
  Eigen::MatrixXd d_short;
  Eigen::MatrixXd d_long;
  Eigen::MatrixXd d_image;
  double d_inv_temperature = 0.0;
};

// L^s = Lc(u_s, f(v)) + Lc(f(v), u_s), L^l = Lc(u_l, v) + Lc(v, u_l) and their
// combination. When `basis` is given its principal directions replace the
// batch fit (the mean is still taken from v).
LossTerms TotalLoss(const Eigen::MatrixXd& u_short, const Eigen::MatrixXd& u_long, const Eigen::MatrixXd& v,
                    double inv_temperature, const LossConfig& cfg, const PcaBasis* basis = nullptr);

}  // namespace debias
