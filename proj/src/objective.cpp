#include "debias/objective.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "debias/error.hpp"

namespace debias {
namespace {

using Eigen::MatrixXd;

void CheckPair(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() == 0) throw Error(ErrorCode::kDegenerateBatch, "empty batch");
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::kShapeMismatch, "contrastive inputs differ in shape");
}

// Row softmax of logits minus identity, scaled by 1/N: d loss / d logits.
MatrixXd LogitGrad(const MatrixXd& logits, double& loss) {
  const auto n = logits.rows();
  MatrixXd g(n, n);
  loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
    const double z = e.sum();
    loss -= logits(i, i) - mx - std::log(z);
    g.row(i) = e / z;
    g(i, i) -= 1.0;
  }
  loss /= static_cast<double>(n);
  return g / static_cast<double>(n);
}

}  // namespace

void LossConfig::Validate() const {
  if (!(lambda_short >= 0.0 && lambda_short <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "lambda_short must be in [0,1]");
  if (pca_rank < 1) throw Error(ErrorCode::kInvalidArgument, "pca_rank must be >= 1");
  if (!(init_inv_temperature > 0.0) || !(max_inv_temperature >= init_inv_temperature))
    throw Error(ErrorCode::kInvalidArgument, "temperature settings invalid");
}

double ContrastiveLoss(const MatrixXd& a, const MatrixXd& b, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
  return ContrastiveLossGrad(a, b, 1.0 / tau).loss;
}

ContrastiveGrad ContrastiveLossGrad(const MatrixXd& a, const MatrixXd& b, double inv_temperature) {
  CheckPair(a, b);
  const MatrixXd sim = a * b.transpose();
  ContrastiveGrad out;
  const MatrixXd g = LogitGrad(sim * inv_temperature, out.loss);
  out.d_a = inv_temperature * g * b;
  out.d_b = inv_temperature * g.transpose() * a;
  out.d_inv_temperature = g.cwiseProduct(sim).sum();
  return out;
}

PcaBasis ComputePcaBasis(const MatrixXd& v, int rank) {
  const auto n = v.rows();
  const auto d = v.cols();
  if (n < 2) throw Error(ErrorCode::kDegenerateBatch, "PCA needs at least two samples");
  if (rank < 1 || rank > std::min<Eigen::Index>(n, d))
    throw Error(ErrorCode::kRankTooLarge,
                "rank " + std::to_string(rank) + " exceeds min(N, D) = " + std::to_string(std::min(n, d)));
  PcaBasis basis;
  basis.mean = v.colwise().mean();
  const MatrixXd centered = v.rowwise() - basis.mean;
  const MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(cov);
  basis.eigenvalues = solver.eigenvalues().reverse();
  basis.components = solver.eigenvectors().rightCols(rank).rowwise().reverse();
  return basis;
}

MatrixXd PcaProject(const MatrixXd& v, const PcaBasis& basis, bool renormalize) {
  const MatrixXd centered = v.rowwise() - basis.mean;
  MatrixXd out = (centered * basis.components * basis.components.transpose()).rowwise() + basis.mean;
  if (renormalize) out.rowwise().normalize();
  return out;
}

MatrixXd PcaProjectBackward(const MatrixXd& v, const PcaBasis& basis, bool renormalize, const MatrixXd& d_out) {
  const MatrixXd proj = basis.components * basis.components.transpose();
  MatrixXd d_rec = d_out;
  if (renormalize) {
    const MatrixXd rec = ((v.rowwise() - basis.mean) * proj).rowwise() + basis.mean;
    for (Eigen::Index i = 0; i < rec.rows(); ++i) {
      const double norm = rec.row(i).norm();
      const Eigen::RowVectorXd o = rec.row(i) / norm;
      d_rec.row(i) = (d_out.row(i) - o * o.dot(d_out.row(i))) / norm;
    }
  }
  // rec_i = P P^T v_i + (I - P P^T) mean(v)
  const Eigen::RowVectorXd d_mean = d_rec.colwise().sum() - d_rec.colwise().sum() * proj;
  return (d_rec * proj).rowwise() + d_mean / static_cast<double>(v.rows());
}

MatrixXd PcaReconstruct(const MatrixXd& v, int rank, bool renormalize) {
  return PcaProject(v, ComputePcaBasis(v, rank), renormalize);
}

LossTerms TotalLoss(const MatrixXd& u_short, const MatrixXd& u_long, const MatrixXd& v, double inv_temperature,
                    const LossConfig& cfg, const PcaBasis* basis) {
  if (u_short.rows() != v.rows() || u_long.rows() != v.rows() || u_short.cols() != v.cols() ||
      u_long.cols() != v.cols())
    throw Error(ErrorCode::kShapeMismatch, "feature matrices must share N and D");

  PcaBasis fitted;
  if (basis == nullptr) {
    fitted = ComputePcaBasis(v, cfg.pca_rank);
  } else {
    // Only the directions are held fixed; the mean always tracks the batch.
    fitted = *basis;
    fitted.mean = v.colwise().mean();
  }
  basis = &fitted;
  const MatrixXd fv = PcaProject(v, *basis, cfg.pca_renormalize);

  const auto s1 = ContrastiveLossGrad(u_short, fv, inv_temperature);
  const auto s2 = ContrastiveLossGrad(fv, u_short, inv_temperature);
  const auto l1 = ContrastiveLossGrad(u_long, v, inv_temperature);
  const auto l2 = ContrastiveLossGrad(v, u_long, inv_temperature);

  LossTerms t;
  t.loss_short = s1.loss + s2.loss;
  t.loss_long = l1.loss + l2.loss;
  const double ws = cfg.weighted ? cfg.lambda_short : 1.0;
  const double wl = cfg.weighted ? 1.0 - cfg.lambda_short : 1.0;
  t.total = ws * t.loss_short + wl * t.loss_long;

  t.d_short = ws * (s1.d_a + s2.d_b);
  t.d_long = wl * (l1.d_a + l2.d_b);
  const MatrixXd d_fv = ws * (s1.d_b + s2.d_a);
  t.d_image = wl * (l1.d_b + l2.d_a) + PcaProjectBackward(v, *basis, cfg.pca_renormalize, d_fv);
  t.d_inv_temperature = ws * (s1.d_inv_temperature + s2.d_inv_temperature) +
                        wl * (l1.d_inv_temperature + l2.d_inv_temperature);
  return t;
}

}  // namespace debias
