#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace debias {

// Named dense tensors. Vectors are stored as 1 x n matrices so that every
// parameter shares one representation for optimizers and checkpoints.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Eigen::MatrixXd value;
    // Leading rows excluded from updates (positional prefix).
    int frozen_rows = 0;
    bool decay = true;
  };

  int Add(std::string name, Eigen::MatrixXd value, bool decay = true, int frozen_rows = 0) {
    entries_.push_back({std::move(name), std::move(value), frozen_rows, decay});
    return static_cast<int>(entries_.size()) - 1;
  }

  int size() const { return static_cast<int>(entries_.size()); }
  Entry& entry(int i) { return entries_[static_cast<size_t>(i)]; }
  const Entry& entry(int i) const { return entries_[static_cast<size_t>(i)]; }
  Eigen::MatrixXd& value(int i) { return entries_[static_cast<size_t>(i)].value; }
  const Eigen::MatrixXd& value(int i) const { return entries_[static_cast<size_t>(i)].value; }

  long NumScalars() const {
    long n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  std::vector<Eigen::MatrixXd> ZerosLike() const {
    std::vector<Eigen::MatrixXd> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(Eigen::MatrixXd::Zero(e.value.rows(), e.value.cols()));
    return out;
  }

 private:
  std::vector<Entry> entries_;
};

using Gradients = std::vector<Eigen::MatrixXd>;

}  // namespace debias
