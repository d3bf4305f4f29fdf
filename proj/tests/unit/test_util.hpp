#pragma once

#include <random>

#include "dsam/numerics.hpp"
#include "dsam/sampling.hpp"

namespace dsam::testing {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

/// Rows grouped by class: P classes x Q rows, labels 0..P-1.
inline SampledBatch grouped_batch(int P, int Q) {
  SampledBatch b;
  b.P = P;
  b.Q = Q;
  for (int k = 0; k < P; ++k) {
    for (int q = 0; q < Q; ++q) {
      b.indices.push_back(b.indices.size());
      b.labels.push_back(k);
    }
  }
  return b;
}

}  // namespace dsam::testing
