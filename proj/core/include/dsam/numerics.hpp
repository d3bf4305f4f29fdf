#pragma once

// Dense primitives shared by the losses, the trainer and the evaluator.
// Feature matrices are row-major: one row per sample, one column per
// embedding dimension.

#include <functional>

#include <Eigen/Dense>

namespace dsam {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Rows are samples. N >= 1, d >= 1, all entries finite.
using FeatureMatrix = Matrix;

inline constexpr double kNormEpsilon = 1e-12;
/// Cosines are pulled into [-1 + kCosineClamp, 1 - kCosineClamp] before arccos.
inline constexpr double kCosineClamp = 1e-7;

/// Throws DimensionMismatch for an empty matrix and NonFiniteEvaluation for
/// NaN/Inf entries.
void validate_features(const Matrix& x);

Vector l2_normalize(const Vector& v);

/// Dot product of the normalized inputs, clamped to [-1, 1].
double cosine_similarity(const Vector& a, const Vector& b);

/// Clamp for arccos arguments; see kCosineClamp.
double clamp_cosine(double c) noexcept;

/// Row-normalized copy of a feature matrix. Every row has unit norm.
class UnitFeatureMatrix {
 public:
  explicit UnitFeatureMatrix(const Matrix& x);

  const Matrix& rows() const noexcept { return unit_; }
  /// Original row norms, kept for chain-rule work through the normalization.
  const Vector& norms() const noexcept { return norms_; }
  Eigen::Index size() const noexcept { return unit_.rows(); }

 private:
  Matrix unit_;
  Vector norms_;
};

/// Symmetric N x N matrix of D(i, j) = exp(2 - 2 cos(theta_ij)) - 1.
class AngularDifferenceMatrix {
 public:
  AngularDifferenceMatrix() = default;
  explicit AngularDifferenceMatrix(Matrix d) : d_(std::move(d)) {}

  double operator()(Eigen::Index i, Eigen::Index j) const { return d_(i, j); }
  const Matrix& values() const noexcept { return d_; }
  Eigen::Index size() const noexcept { return d_.rows(); }

 private:
  Matrix d_;
};

/// Entry (i, j) = ||X_i - X_j||^2 via the Gram identity; symmetric, zero
/// diagonal, negative round-off clamped to 0.
Matrix pairwise_sq_euclidean(const Matrix& x);

/// Cosine matrix of the rows of `unit`, clamped to [-1, 1], exact ones on the diagonal.
Matrix pairwise_cosine(const UnitFeatureMatrix& unit);

double angular_difference(double cosine) noexcept;

AngularDifferenceMatrix pairwise_angular_D(const Matrix& x);

/// Gradient w.r.t. the raw rows of `x` of sum_ij grad_d(i, j) * D(i, j).
/// `grad_d` need not be symmetric.
Matrix angular_D_backward(const Matrix& x, const Matrix& grad_d);

/// Pulls a gradient taken w.r.t. unit rows back through row normalization.
Matrix normalize_backward(const UnitFeatureMatrix& unit, const Matrix& grad_unit);

using ScalarFunction = std::function<double(const Vector&)>;

/// Central differences (f(x + h e_k) - f(x - h e_k)) / 2h per coordinate.
Vector finite_difference_gradient(const ScalarFunction& f, const Vector& x, double h = 1e-5);

/// Flatten/unflatten helpers so matrix-valued functions can go through
/// finite_difference_gradient.
Vector flatten(const Matrix& m);
Matrix unflatten(const Vector& v, Eigen::Index rows, Eigen::Index cols);

/// ||a - b||_2 / max(||a||_2, ||b||_2, floor). Used by every gradient check.
double relative_error(const Vector& analytic, const Vector& numeric, double floor = 1e-8);

}  // namespace dsam
