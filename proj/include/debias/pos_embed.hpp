#pragma once

#include <Eigen/Dense>

namespace debias {

inline constexpr int kBaseContext = 77;
inline constexpr int kDefaultFreeze = 20;
inline constexpr int kDefaultStretchFactor = 4;

// Learned absolute positional embeddings, one row per position. Rows
// [0, frozen_prefix) receive no updates during training.
struct PositionalTable {
  Eigen::MatrixXd embeddings;
  int frozen_prefix = 0;
  int stretch_factor = 1;

  int length() const { return static_cast<int>(embeddings.rows()); }
};

inline int StretchedLength(int source_rows, int freeze, int factor) {
  return freeze + factor * (source_rows - freeze);
}

// Keeps rows [0, freeze) verbatim and linearly interpolates the remaining
// rows onto factor times as many positions. Output row p >= freeze samples the
// source at
//   s(p) = freeze + (p - freeze) * (L_src - 1 - freeze) / (L_out - 1 - freeze)
// so the first and last stretched rows are exact copies of source rows.
//
// expected_rows guards the source shape (77 for CLIP-style tables); pass a
// negative value to accept any length > freeze.
PositionalTable Stretch(const Eigen::MatrixXd& table, int freeze = kDefaultFreeze,
                        int factor = kDefaultStretchFactor, int expected_rows = kBaseContext);

// Ablation arm: every row is interpolated, nothing is frozen.
PositionalTable StretchAll(const Eigen::MatrixXd& table, int factor);

}  // namespace debias
