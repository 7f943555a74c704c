#include "debias/pos_embed.hpp"

#include <string>

#include "debias/error.hpp"

namespace debias {

PositionalTable Stretch(const Eigen::MatrixXd& table, int freeze, int factor, int expected_rows) {
  const int src = static_cast<int>(table.rows());
  if (expected_rows >= 0 && src != expected_rows)
    throw Error(ErrorCode::kShapeMismatch,
                "expected " + std::to_string(expected_rows) + " source rows, got " + std::to_string(src));
  if (freeze < 0 || freeze >= src) throw Error(ErrorCode::kShapeMismatch, "freeze must be in [0, source rows)");
  if (factor < 1) throw Error(ErrorCode::kInvalidArgument, "stretch factor must be >= 1");

  const int out_rows = StretchedLength(src, freeze, factor);
  PositionalTable out;
  out.frozen_prefix = freeze;
  out.stretch_factor = factor;
  out.embeddings.resize(out_rows, table.cols());
  out.embeddings.topRows(freeze) = table.topRows(freeze);

  // Integer numerator/denominator keep the grid exact at source rows.
  const long den = out_rows - 1 - freeze;
  const long span = src - 1 - freeze;
  for (int p = freeze; p < out_rows; ++p) {
    if (den == 0) {
      out.embeddings.row(p) = table.row(freeze);
      continue;
    }
    const long num = static_cast<long>(p - freeze) * span;
    const int lo = freeze + static_cast<int>(num / den);
    const long rem = num % den;
    if (rem == 0) {
      out.embeddings.row(p) = table.row(lo);
    } else {
      const double w = static_cast<double>(rem) / static_cast<double>(den);
      out.embeddings.row(p) = (1.0 - w) * table.row(lo) + w * table.row(lo + 1);
    }
  }
  return out;
}

PositionalTable StretchAll(const Eigen::MatrixXd& table, int factor) {
  if (table.rows() < 1) throw Error(ErrorCode::kShapeMismatch, "empty table");
  return Stretch(table, 0, factor, -1);
}

}  // namespace debias
