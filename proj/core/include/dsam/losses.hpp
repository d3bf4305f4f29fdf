#pragma once

// Loss functions with analytic gradients: the SoftMax family, the angular
// margin family, DSAM (distance shrinking with angular marginalizing), the
// batch-hard triplet baseline and the angular-positive diagnostic loss.

#include <map>
#include <optional>
#include <span>
#include <string>

#include "dsam/numerics.hpp"
#include "dsam/sampling.hpp"

namespace dsam {

/// One row per class. The bias only enters plain SoftMax; the normalized
/// variants drop it and normalize each row.
struct ClassifierWeights {
  Matrix W;
  Vector bias;

  Eigen::Index classes() const noexcept { return W.rows(); }
  Eigen::Index dim() const noexcept { return W.cols(); }
};

void validate_weights(const ClassifierWeights& weights);

/// Target logit s * cos(m1 * theta + m2) + m3; (1, 0, 0) is normalized SoftMax.
struct AngularMarginConfig {
  double s = 64.0;
  double m1 = 1.0;
  double m2 = 0.5;
  double m3 = 0.0;

  static AngularMarginConfig arcface() { return {64.0, 1.0, 0.5, 0.0}; }
  static AngularMarginConfig normalized_softmax(double s) { return {s, 1.0, 0.0, 0.0}; }
  void validate() const;
};

struct DsamConfig {
  double m_neg = 0.9;  // margin in D units, 0 < m_neg < e^4 - 1
  double gamma = 0.8;
  double lambda = 0.05;

  void validate() const;
};

struct LossResult {
  double value = 0.0;
  Matrix grad_features;
  std::optional<Matrix> grad_weights;
  std::optional<Vector> grad_bias;
  std::map<std::string, double> diagnostics;
};

/// Per-anchor term: value plus an N x d gradient (rows outside the partition are zero).
struct AnchorTerm {
  double value = 0.0;
  Matrix grad;
};

/// Per-anchor negative term: value plus gradient w.r.t. the N x N D entries.
struct NegativeTerm {
  double value = 0.0;
  Matrix grad_d;
  std::size_t active = 0;  // negatives with a strictly positive hinge
  std::size_t hardest_positive = 0;
};

struct AngularPositiveTerm {
  double value = 0.0;
  /// Gradient w.r.t. the raw features (through the normalization).
  Matrix grad_features;
  /// Gradient w.r.t. the unit vectors treated as free variables:
  /// -x_a / sqrt(1 - cos^2) per positive, which blows up as cos -> 1.
  Matrix grad_unit;
};

enum class BaseLoss { Softmax, NormalizedSoftmax, AngularMargin };

// ---- SoftMax family -------------------------------------------------------

LossResult softmax_ce(const Matrix& x, const ClassifierWeights& weights, std::span<const int> labels);

/// Softmax probability of the true class when every off-class score equals
/// f_j and the true score is z * f_j.
double saturation_probability(int n, double f_j, double z);

/// N x n logits: s * cos(m1 theta + m2) + m3 for the target, s * cos(theta_j) elsewhere.
Matrix angular_margin_logits(const Matrix& x, const ClassifierWeights& weights, std::span<const int> labels,
                             const AngularMarginConfig& cfg);

LossResult angular_margin_ce(const Matrix& x, const ClassifierWeights& weights, std::span<const int> labels,
                             const AngularMarginConfig& cfg);

// ---- DSAM ----------------------------------------------------------------

inline constexpr double kPosEpsilon = 1e-8;

/// sqrt(sum_{i in positives} ||X_a - X_i||^2); zero gradient below kPosEpsilon.
AnchorTerm dsam_pos(const AnchorPartition& partition, const Matrix& x);

/// (1/|negatives|) sum_i max(0, m_neg - (D(a, i) - max_j D(a, j))). The
/// hardest positive is the first index among tied maxima; a hinge exactly at
/// zero contributes no gradient.
NegativeTerm dsam_neg(const AnchorPartition& partition, const AngularDifferenceMatrix& d, const DsamConfig& cfg);

/// (1/(P Q)) sum_a (L_pos^a + gamma L_neg^a) over the rows of a PK batch.
LossResult dsam_loss(const Matrix& x, const SampledBatch& batch, const DsamConfig& cfg);

/// base + lambda * DSAM. Diagnostics are prefixed "base." and "dsam.".
LossResult combined_loss(const Matrix& x, const ClassifierWeights& weights, std::span<const int> labels,
                         const SampledBatch& batch, BaseLoss base, const AngularMarginConfig& angular,
                         const DsamConfig& dsam);

// ---- Baselines and diagnostics -------------------------------------------

LossResult triplet_batch_hard(const Matrix& x, const SampledBatch& batch, double margin);

/// sum_{i in positives} arccos(x_a . x_i) over unit vectors. Never used for training.
AngularPositiveTerm ang_pos_loss(const AnchorPartition& partition, const Matrix& x);

}  // namespace dsam
