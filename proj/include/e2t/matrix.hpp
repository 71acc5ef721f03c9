#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "e2t/common.hpp"

namespace e2t {

// Dense symmetric n-by-n matrix of reals in [0,1]. Used for the co-occurrence
// matrix O, the dissimilarity D = 1 - O, and the surrogate reconstruction.
class PairMatrix {
 public:
  // Dense storage is the design point; refuse sizes past ~20k rows.
  static constexpr std::size_t kMaxRows = 20000;

  PairMatrix() = default;
  explicit PairMatrix(std::size_t n, double fill = 0.0) : n_(n), a_(n * n, fill) {
    if (n > kMaxRows)
      throw validation_error("pair matrix too large: n=" + std::to_string(n) +
                             " exceeds dense-storage limit " +
                             std::to_string(kMaxRows));
  }

  std::size_t n() const { return n_; }

  double at(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }
  double& ref(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }

  // Writes both (i,j) and (j,i).
  void set(std::size_t i, std::size_t j, double v) {
    a_[i * n_ + j] = v;
    a_[j * n_ + i] = v;
  }

  const std::vector<double>& data() const { return a_; }
  std::vector<double>& data() { return a_; }

 private:
  std::size_t n_ = 0;
  std::vector<double> a_;
};

}  // namespace e2t
