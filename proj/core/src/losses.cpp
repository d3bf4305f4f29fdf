#include "dsam/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dsam/errors.hpp"

namespace dsam {
namespace {

void check_labels(std::span<const int> labels, Eigen::Index rows, Eigen::Index classes) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    fail(ErrorCode::DimensionMismatch, "label count " + std::to_string(labels.size()) + " != feature rows " +
                                           std::to_string(rows));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      fail(ErrorCode::LabelOutOfRange, "label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                                           " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

void check_classifier_inputs(const Matrix& x, const ClassifierWeights& weights, std::span<const int> labels) {
  validate_features(x);
  validate_weights(weights);
  if (x.cols() != weights.dim()) {
    fail(ErrorCode::DimensionMismatch, "feature dim " + std::to_string(x.cols()) + " != weight dim " +
                                           std::to_string(weights.dim()));
  }
  check_labels(labels, x.rows(), weights.classes());
}

// Row-wise softmax of `logits` plus mean cross-entropy against `labels`.
// `probs` receives the probabilities.
double cross_entropy(const Matrix& logits, std::span<const int> labels, Matrix& probs) {
  const Eigen::Index n = logits.rows();
  probs.resize(n, logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index arg = 0;
    const double top = logits.row(i).maxCoeff(&arg);
    double rest = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      const double e = std::exp(logits(i, j) - top);
      probs(i, j) = e;
      if (j != arg) rest += e;
    }
    // log-sum-exp written with log1p so saturated rows keep tiny losses.
    const double log_norm = std::log1p(rest);
    probs.row(i) /= (1.0 + rest);
    total += top + log_norm - logits(i, labels[static_cast<std::size_t>(i)]);
  }
  return total / static_cast<double>(n);
}

double mean_target_probability(const Matrix& probs, std::span<const int> labels) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) sum += probs(i, labels[static_cast<std::size_t>(i)]);
  return sum / static_cast<double>(probs.rows());
}

bool plain_cosine_target(const AngularMarginConfig& cfg) { return cfg.m1 == 1.0 && cfg.m2 == 0.0; }

void add_pos_term(const AnchorPartition& partition, const Matrix& x, double scale, double& value, Matrix& grad) {
  const auto a = static_cast<Eigen::Index>(partition.anchor);
  double sum = 0.0;
  for (std::size_t i : partition.positives) {
    sum += (x.row(a) - x.row(static_cast<Eigen::Index>(i))).squaredNorm();
  }
  const double term = std::sqrt(sum);
  value += term;
  if (term < kPosEpsilon) return;
  for (std::size_t i : partition.positives) {
    const auto ii = static_cast<Eigen::Index>(i);
    const auto diff = ((x.row(a) - x.row(ii)) * (scale / term)).eval();
    grad.row(a) += diff;
    grad.row(ii) -= diff;
  }
}

// Adds scale * dL_neg/dD into grad_d; returns the unscaled value.
double add_neg_term(const AnchorPartition& partition, const AngularDifferenceMatrix& d, const DsamConfig& cfg,
                    double scale, Matrix& grad_d, std::size_t& active, std::size_t& hardest) {
  if (partition.positives.empty()) {
    fail(ErrorCode::EmptyPositiveSet, "anchor " + std::to_string(partition.anchor) + " has no positives");
  }
  const auto a = static_cast<Eigen::Index>(partition.anchor);
  hardest = partition.positives.front();
  double hardest_d = d(a, static_cast<Eigen::Index>(hardest));
  for (std::size_t j : partition.positives) {
    const double v = d(a, static_cast<Eigen::Index>(j));
    if (v > hardest_d || (v == hardest_d && j < hardest)) {
      hardest_d = v;
      hardest = j;
    }
  }
  if (partition.negatives.empty()) return 0.0;
  const double inv = 1.0 / static_cast<double>(partition.negatives.size());
  double sum = 0.0;
  active = 0;
  for (std::size_t i : partition.negatives) {
    const double hinge = cfg.m_neg - (d(a, static_cast<Eigen::Index>(i)) - hardest_d);
    if (hinge > 0.0) {
      sum += hinge;
      ++active;
      grad_d(a, static_cast<Eigen::Index>(i)) -= scale * inv;
      grad_d(a, static_cast<Eigen::Index>(hardest)) += scale * inv;
    }
  }
  return sum * inv;
}

void check_batch_features(const Matrix& x, const SampledBatch& batch) {
  validate_features(x);
  validate_batch(batch);
  if (static_cast<std::size_t>(x.rows()) != batch.size()) {
    fail(ErrorCode::InvalidBatchShape, "feature rows " + std::to_string(x.rows()) + " != batch size " +
                                           std::to_string(batch.size()));
  }
}

}  // namespace

void validate_weights(const ClassifierWeights& weights) {
  if (weights.classes() < 2) fail(ErrorCode::DimensionMismatch, "classifier needs at least 2 classes");
  if (weights.dim() < 1) fail(ErrorCode::DimensionMismatch, "classifier rows must be nonempty");
  if (weights.bias.size() != 0 && weights.bias.size() != weights.classes()) {
    fail(ErrorCode::DimensionMismatch, "bias length must match class count");
  }
  if (!weights.W.allFinite() || !weights.bias.allFinite()) {
    fail(ErrorCode::NonFiniteEvaluation, "classifier weights contain NaN or Inf");
  }
}

void AngularMarginConfig::validate() const {
  if (!(s > 0.0)) fail(ErrorCode::InvalidConfig, "angular.s must be positive");
  if (!(m1 >= 1.0)) fail(ErrorCode::InvalidConfig, "angular.m1 must be >= 1");
  if (!(m2 >= 0.0)) fail(ErrorCode::InvalidConfig, "angular.m2 must be >= 0");
  if (!(m3 >= 0.0)) fail(ErrorCode::InvalidConfig, "angular.m3 must be >= 0");
}

void DsamConfig::validate() const {
  const double upper = std::expm1(4.0);
  if (!(m_neg > 0.0 && m_neg < upper)) fail(ErrorCode::InvalidConfig, "dsam.m_neg must lie in (0, e^4 - 1)");
  if (!(gamma >= 0.0)) fail(ErrorCode::InvalidConfig, "dsam.gamma must be >= 0");
  if (!(lambda >= 0.0)) fail(ErrorCode::InvalidConfig, "dsam.lambda must be >= 0");
}

LossResult softmax_ce(const Matrix& x, const ClassifierWeights& weights, std::span<const int> labels) {
  check_classifier_inputs(x, weights, labels);
  Matrix logits = x * weights.W.transpose();
  if (weights.bias.size() != 0) logits.rowwise() += weights.bias.transpose();

  Matrix probs;
  LossResult out;
  out.value = cross_entropy(logits, labels, probs);

  Matrix g = probs;
  for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  g /= static_cast<double>(x.rows());

  out.grad_features = g * weights.W;
  out.grad_weights = g.transpose() * x;
  out.grad_bias = g.colwise().sum().transpose();
  out.diagnostics["mean_target_probability"] = mean_target_probability(probs, labels);
  return out;
}

double saturation_probability(int n, double f_j, double z) {
  if (n < 2) fail(ErrorCode::InvalidConfig, "saturation_probability needs n >= 2");
  if (!(z >= 1.0)) fail(ErrorCode::InvalidConfig, "saturation_probability needs z >= 1");
  if (!std::isfinite(f_j)) fail(ErrorCode::NonFiniteEvaluation, "f_j must be finite");
  return 1.0 / (1.0 + static_cast<double>(n - 1) * std::exp((1.0 - z) * f_j));
}

namespace {

struct AngularForward {
  UnitFeatureMatrix features;
  UnitFeatureMatrix weights;
  Matrix cosine;
  Matrix logits;
  Matrix dlogit_dcos;
  double mean_theta = 0.0;
};

AngularForward angular_forward(const Matrix& x, const ClassifierWeights& weights, std::span<const int> labels,
                               const AngularMarginConfig& cfg) {
  check_classifier_inputs(x, weights, labels);
  cfg.validate();
  AngularForward fwd{UnitFeatureMatrix(x), UnitFeatureMatrix(weights.W), {}, {}, {}, 0.0};
  fwd.cosine = (fwd.features.rows() * fwd.weights.rows().transpose()).cwiseMax(-1.0).cwiseMin(1.0);
  fwd.logits = cfg.s * fwd.cosine;
  fwd.dlogit_dcos = Matrix::Constant(fwd.cosine.rows(), fwd.cosine.cols(), cfg.s);

  double theta_sum = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::Index y = labels[static_cast<std::size_t>(i)];
    const double raw = fwd.cosine(i, y);
    // The logit uses the exact angle; the clamp only guards the 1/sin(theta) slope.
    const double c = clamp_cosine(raw);
    const double theta = std::acos(raw);
    theta_sum += theta;
    if (plain_cosine_target(cfg)) {
      fwd.logits(i, y) = cfg.s * raw + cfg.m3;
      continue;
    }
    const double angle = cfg.m1 * theta + cfg.m2;
    fwd.logits(i, y) = cfg.s * std::cos(angle) + cfg.m3;
    // d/dc [s cos(m1 acos(c) + m2)] = s m1 sin(angle) / sqrt(1 - c^2); zero where the clamp is active.
    fwd.dlogit_dcos(i, y) = (raw == c) ? cfg.s * cfg.m1 * std::sin(angle) / std::sqrt(1.0 - c * c) : 0.0;
  }
  fwd.mean_theta = theta_sum / static_cast<double>(x.rows());
  return fwd;
}

}  // namespace

Matrix angular_margin_logits(const Matrix& x, const ClassifierWeights& weights, std::span<const int> labels,
                             const AngularMarginConfig& cfg) {
  return angular_forward(x, weights, labels, cfg).logits;
}

LossResult angular_margin_ce(const Matrix& x, const ClassifierWeights& weights, std::span<const int> labels,
                             const AngularMarginConfig& cfg) {
  const AngularForward fwd = angular_forward(x, weights, labels, cfg);
  Matrix probs;
  LossResult out;
  out.value = cross_entropy(fwd.logits, labels, probs);

  Matrix g = probs;
  for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  g /= static_cast<double>(x.rows());
  const Matrix grad_cos = g.cwiseProduct(fwd.dlogit_dcos);

  out.grad_features = normalize_backward(fwd.features, grad_cos * fwd.weights.rows());
  out.grad_weights = normalize_backward(fwd.weights, grad_cos.transpose() * fwd.features.rows());
  out.diagnostics["mean_target_angle"] = fwd.mean_theta;
  out.diagnostics["mean_target_probability"] = mean_target_probability(probs, labels);
  return out;
}

AnchorTerm dsam_pos(const AnchorPartition& partition, const Matrix& x) {
  validate_features(x);
  validate_partition(partition, static_cast<std::size_t>(x.rows()));
  AnchorTerm out{0.0, Matrix::Zero(x.rows(), x.cols())};
  add_pos_term(partition, x, 1.0, out.value, out.grad);
  return out;
}

NegativeTerm dsam_neg(const AnchorPartition& partition, const AngularDifferenceMatrix& d, const DsamConfig& cfg) {
  cfg.validate();
  validate_partition(partition, static_cast<std::size_t>(d.size()));
  NegativeTerm out;
  out.grad_d = Matrix::Zero(d.size(), d.size());
  out.value = add_neg_term(partition, d, cfg, 1.0, out.grad_d, out.active, out.hardest_positive);
  return out;
}

LossResult dsam_loss(const Matrix& x, const SampledBatch& batch, const DsamConfig& cfg) {
  check_batch_features(x, batch);
  cfg.validate();
  const auto partitions = build_partitions(batch);
  const AngularDifferenceMatrix d = pairwise_angular_D(x);
  const double scale = 1.0 / static_cast<double>(batch.size());

  Matrix grad = Matrix::Zero(x.rows(), x.cols());
  Matrix grad_d = Matrix::Zero(x.rows(), x.rows());
  double pos_sum = 0.0;
  double neg_sum = 0.0;
  std::size_t active_total = 0;
  std::size_t negative_total = 0;
  for (const auto& partition : partitions) {
    add_pos_term(partition, x, scale, pos_sum, grad);
    std::size_t active = 0;
    std::size_t hardest = 0;
    neg_sum += add_neg_term(partition, d, cfg, cfg.gamma * scale, grad_d, active, hardest);
    active_total += active;
    negative_total += partition.negatives.size();
  }
  if (cfg.gamma != 0.0) grad += angular_D_backward(x, grad_d);

  LossResult out;
  out.value = (pos_sum + cfg.gamma * neg_sum) * scale;
  out.grad_features = std::move(grad);
  out.diagnostics["mean_l_pos"] = pos_sum * scale;
  out.diagnostics["mean_l_neg"] = neg_sum * scale;
  out.diagnostics["active_hinge_fraction"] =
      negative_total == 0 ? 0.0 : static_cast<double>(active_total) / static_cast<double>(negative_total);
  return out;
}

LossResult combined_loss(const Matrix& x, const ClassifierWeights& weights, std::span<const int> labels,
                         const SampledBatch& batch, BaseLoss base, const AngularMarginConfig& angular,
                         const DsamConfig& dsam) {
  LossResult base_result;
  switch (base) {
    case BaseLoss::Softmax:
      base_result = softmax_ce(x, weights, labels);
      break;
    case BaseLoss::NormalizedSoftmax:
      base_result = angular_margin_ce(x, weights, labels, AngularMarginConfig::normalized_softmax(angular.s));
      break;
    case BaseLoss::AngularMargin:
      base_result = angular_margin_ce(x, weights, labels, angular);
      break;
  }
  const LossResult metric = dsam_loss(x, batch, dsam);

  LossResult out;
  out.value = base_result.value + dsam.lambda * metric.value;
  out.grad_features = base_result.grad_features + dsam.lambda * metric.grad_features;
  out.grad_weights = std::move(base_result.grad_weights);
  out.grad_bias = std::move(base_result.grad_bias);
  for (const auto& [key, v] : base_result.diagnostics) out.diagnostics["base." + key] = v;
  for (const auto& [key, v] : metric.diagnostics) out.diagnostics["dsam." + key] = v;
  out.diagnostics["base.value"] = base_result.value;
  out.diagnostics["dsam.value"] = metric.value;
  return out;
}

LossResult triplet_batch_hard(const Matrix& x, const SampledBatch& batch, double margin) {
  check_batch_features(x, batch);
  if (!(margin >= 0.0)) fail(ErrorCode::InvalidConfig, "triplet margin must be >= 0");
  const auto partitions = build_partitions(batch);
  const Matrix sq = pairwise_sq_euclidean(x);
  const double scale = 1.0 / static_cast<double>(batch.size());

  LossResult out;
  out.grad_features = Matrix::Zero(x.rows(), x.cols());
  std::size_t active = 0;
  double pos_sum = 0.0;
  double neg_sum = 0.0;
  for (const auto& partition : partitions) {
    const auto a = static_cast<Eigen::Index>(partition.anchor);
    // First index wins ties on both sides.
    std::size_t hard_pos = partition.positives.front();
    for (std::size_t p : partition.positives) {
      if (sq(a, static_cast<Eigen::Index>(p)) > sq(a, static_cast<Eigen::Index>(hard_pos))) hard_pos = p;
    }
    std::size_t hard_neg = partition.negatives.front();
    for (std::size_t n : partition.negatives) {
      if (sq(a, static_cast<Eigen::Index>(n)) < sq(a, static_cast<Eigen::Index>(hard_neg))) hard_neg = n;
    }
    const auto p = static_cast<Eigen::Index>(hard_pos);
    const auto n = static_cast<Eigen::Index>(hard_neg);
    const Eigen::RowVectorXd to_pos = x.row(a) - x.row(p);
    const Eigen::RowVectorXd to_neg = x.row(a) - x.row(n);
    const double d_pos = to_pos.norm();
    const double d_neg = to_neg.norm();
    pos_sum += d_pos;
    neg_sum += d_neg;
    const double hinge = margin + d_pos - d_neg;
    if (hinge <= 0.0) continue;
    ++active;
    out.value += hinge;
    if (d_pos > kNormEpsilon) {
      const Eigen::RowVectorXd u = to_pos * (scale / d_pos);
      out.grad_features.row(a) += u;
      out.grad_features.row(p) -= u;
    }
    if (d_neg > kNormEpsilon) {
      const Eigen::RowVectorXd u = to_neg * (scale / d_neg);
      out.grad_features.row(a) -= u;
      out.grad_features.row(n) += u;
    }
  }
  out.value *= scale;
  out.diagnostics["active_fraction"] = static_cast<double>(active) * scale;
  out.diagnostics["mean_hardest_positive"] = pos_sum * scale;
  out.diagnostics["mean_hardest_negative"] = neg_sum * scale;
  return out;
}

AngularPositiveTerm ang_pos_loss(const AnchorPartition& partition, const Matrix& x) {
  validate_features(x);
  validate_partition(partition, static_cast<std::size_t>(x.rows()));
  const UnitFeatureMatrix unit(x);
  const Matrix& u = unit.rows();
  const auto a = static_cast<Eigen::Index>(partition.anchor);

  AngularPositiveTerm out;
  out.grad_unit = Matrix::Zero(x.rows(), x.cols());
  Matrix smooth = Matrix::Zero(x.rows(), x.cols());
  for (std::size_t index : partition.positives) {
    const auto i = static_cast<Eigen::Index>(index);
    const double raw = u.row(a).dot(u.row(i));
    const double c = clamp_cosine(raw);
    out.value += std::acos(c);
    const double k = -1.0 / std::sqrt(1.0 - c * c);
    out.grad_unit.row(i) += k * u.row(a);
    out.grad_unit.row(a) += k * u.row(i);
    if (raw == c) {
      smooth.row(i) += k * u.row(a);
      smooth.row(a) += k * u.row(i);
    }
  }
  out.grad_features = normalize_backward(unit, smooth);
  return out;
}

}  // namespace dsam
