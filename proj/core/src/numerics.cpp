#include "dsam/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dsam/errors.hpp"

namespace dsam {

void validate_features(const Matrix& x) {
  if (x.rows() < 1 || x.cols() < 1) {
    fail(ErrorCode::DimensionMismatch, "feature matrix must have at least one row and one column");
  }
  if (!x.allFinite()) fail(ErrorCode::NonFiniteEvaluation, "feature matrix contains NaN or Inf");
}

Vector l2_normalize(const Vector& v) {
  const double norm = v.norm();
  if (!(norm > kNormEpsilon)) {
    fail(ErrorCode::DegenerateVector, "vector norm " + std::to_string(norm) + " is at or below 1e-12");
  }
  return v / norm;
}

double cosine_similarity(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) fail(ErrorCode::DimensionMismatch, "cosine_similarity on vectors of different length");
  return std::clamp(l2_normalize(a).dot(l2_normalize(b)), -1.0, 1.0);
}

double clamp_cosine(double c) noexcept { return std::clamp(c, -1.0 + kCosineClamp, 1.0 - kCosineClamp); }

UnitFeatureMatrix::UnitFeatureMatrix(const Matrix& x) : unit_(x.rows(), x.cols()), norms_(x.rows()) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double norm = x.row(i).norm();
    if (!(norm > kNormEpsilon)) {
      fail(ErrorCode::DegenerateVector, "row " + std::to_string(i) + " has norm at or below 1e-12");
    }
    norms_(i) = norm;
    unit_.row(i) = x.row(i) / norm;
  }
}

Matrix pairwise_sq_euclidean(const Matrix& x) {
  validate_features(x);
  const Eigen::Index n = x.rows();
  const Matrix gram = x * x.transpose();
  const Vector sq = gram.diagonal();
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = std::max(sq(i) + sq(j) - 2.0 * gram(i, j), 0.0);
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

Matrix pairwise_cosine(const UnitFeatureMatrix& unit) {
  Matrix cos = unit.rows() * unit.rows().transpose();
  for (Eigen::Index i = 0; i < cos.rows(); ++i) {
    cos(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < cos.cols(); ++j) {
      const double c = std::clamp(cos(i, j), -1.0, 1.0);
      cos(i, j) = c;
      cos(j, i) = c;
    }
  }
  return cos;
}

double angular_difference(double cosine) noexcept { return std::expm1(2.0 - 2.0 * cosine); }

AngularDifferenceMatrix pairwise_angular_D(const Matrix& x) {
  validate_features(x);
  const Matrix cos = pairwise_cosine(UnitFeatureMatrix(x));
  Matrix d(cos.rows(), cos.cols());
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < d.cols(); ++j) {
      const double v = angular_difference(cos(i, j));
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return AngularDifferenceMatrix(std::move(d));
}

Matrix normalize_backward(const UnitFeatureMatrix& unit, const Matrix& grad_unit) {
  const Matrix& u = unit.rows();
  Matrix grad(u.rows(), u.cols());
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const double radial = u.row(i).dot(grad_unit.row(i));
    grad.row(i) = (grad_unit.row(i) - radial * u.row(i)) / unit.norms()(i);
  }
  return grad;
}

Matrix angular_D_backward(const Matrix& x, const Matrix& grad_d) {
  if (grad_d.rows() != x.rows() || grad_d.cols() != x.rows()) {
    fail(ErrorCode::DimensionMismatch, "grad_d must be N x N");
  }
  const UnitFeatureMatrix unit(x);
  const Matrix& u = unit.rows();
  const Eigen::Index n = x.rows();
  // dD/dcos = -2 exp(2 - 2 cos); D(i, j) and D(j, i) are the same function.
  Matrix grad_cos = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double g = grad_d(i, j) + grad_d(j, i);
      if (g == 0.0) continue;
      const double raw = u.row(i).dot(u.row(j));
      if (raw > 1.0 || raw < -1.0) continue;
      grad_cos(i, j) = -2.0 * std::exp(2.0 - 2.0 * raw) * g;
    }
  }
  // grad_cos(i, j) already folds grad_d(i, j) + grad_d(j, i).
  Matrix grad_unit = Matrix::Zero(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (grad_cos(i, j) != 0.0) grad_unit.row(i) += grad_cos(i, j) * u.row(j);
    }
  }
  return normalize_backward(unit, grad_unit);
}

Vector finite_difference_gradient(const ScalarFunction& f, const Vector& x, double h) {
  if (!(h > 0.0)) fail(ErrorCode::InvalidConfig, "finite-difference step must be positive");
  Vector grad(x.size());
  Vector probe = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double original = probe(k);
    probe(k) = original + h;
    const double up = f(probe);
    probe(k) = original - h;
    const double down = f(probe);
    probe(k) = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      fail(ErrorCode::NonFiniteEvaluation, "probe at coordinate " + std::to_string(k) + " is not finite");
    }
    grad(k) = (up - down) / (2.0 * h);
  }
  return grad;
}

Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

Matrix unflatten(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) fail(ErrorCode::ShapeMismatch, "unflatten size mismatch");
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

double relative_error(const Vector& analytic, const Vector& numeric, double floor) {
  if (analytic.size() != numeric.size()) fail(ErrorCode::ShapeMismatch, "relative_error size mismatch");
  const double scale = std::max({analytic.norm(), numeric.norm(), floor});
  return (analytic - numeric).norm() / scale;
}

}  // namespace dsam
