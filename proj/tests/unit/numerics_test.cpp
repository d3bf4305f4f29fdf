#include "dsam/numerics.hpp"

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "dsam/errors.hpp"
#include "test_util.hpp"

namespace dsam {
namespace {

using testing::random_matrix;

TEST(L2Normalize, ThreeFourFive) {
  const Vector u = l2_normalize(Vector{{3.0, 4.0}});
  EXPECT_DOUBLE_EQ(u(0), 0.6);
  EXPECT_DOUBLE_EQ(u(1), 0.8);
}

TEST(L2Normalize, AxisAligned) {
  const Vector u = l2_normalize(Vector{{0.0, 0.0, 5.0}});
  EXPECT_EQ(u, (Vector{{0.0, 0.0, 1.0}}));
}

TEST(L2Normalize, RejectsTinyVector) {
  try {
    l2_normalize(Vector{{1e-30, 0.0}});
    FAIL() << "expected DegenerateVector";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateVector);
  }
}

TEST(CosineSimilarity, SpotValues) {
  EXPECT_DOUBLE_EQ(cosine_similarity(Vector{{1.0, 0.0}}, Vector{{0.0, 1.0}}), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(Vector{{2.0, 0.0}}, Vector{{5.0, 0.0}}), 1.0);
  EXPECT_NEAR(cosine_similarity(Vector{{1.0, 1.0}}, Vector{{1.0, -1.0}}), 0.0, 1e-16);
  EXPECT_THROW(cosine_similarity(Vector{{0.0, 0.0}}, Vector{{1.0, 0.0}}), Error);
}

TEST(PairwiseSqEuclidean, ThreeFourFive) {
  Matrix x(2, 2);
  x << 0, 0, 3, 4;
  const Matrix d = pairwise_sq_euclidean(x);
  EXPECT_DOUBLE_EQ(d(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(d(0, 1), 25.0);
  EXPECT_DOUBLE_EQ(d(1, 0), 25.0);
  EXPECT_DOUBLE_EQ(d(1, 1), 0.0);
}

TEST(PairwiseSqEuclidean, IdenticalRowsGiveZeros) {
  Matrix x(4, 3);
  x.rowwise() = Eigen::RowVector3d(0.7, -1.3, 2.2);
  EXPECT_TRUE(pairwise_sq_euclidean(x).isZero(0.0));
}

TEST(PairwiseSqEuclidean, MatchesDoubleLoop) {
  Rng rng(11);
  const Matrix x = random_matrix(5, 3, rng);
  const Matrix d = pairwise_sq_euclidean(x);
  for (Eigen::Index i = 0; i < 5; ++i) {
    for (Eigen::Index j = 0; j < 5; ++j) {
      double naive = 0.0;
      for (Eigen::Index k = 0; k < 3; ++k) naive += (x(i, k) - x(j, k)) * (x(i, k) - x(j, k));
      EXPECT_NEAR(d(i, j), naive, 1e-12);
    }
  }
}

TEST(PairwiseSqEuclidean, GramIdentityOnRandomInputs) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(7, 4, rng);
    const Matrix d = pairwise_sq_euclidean(x);
    for (Eigen::Index i = 0; i < 7; ++i) {
      for (Eigen::Index j = 0; j < 7; ++j) {
        const double identity = x.row(i).squaredNorm() + x.row(j).squaredNorm() - 2.0 * x.row(i).dot(x.row(j));
        EXPECT_NEAR(d(i, j), std::max(identity, 0.0), 1e-10);
        EXPECT_GE(d(i, j), 0.0);
        EXPECT_EQ(d(i, j), d(j, i));
      }
    }
  }
}

TEST(PairwiseAngularD, SpotValues) {
  Matrix x(4, 2);
  x << 1, 0,   // 0
      3, 0,    // parallel to 0
      0, 2,    // orthogonal
      -1, 0;   // antiparallel
  const auto d = pairwise_angular_D(x);
  EXPECT_NEAR(d(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(d(0, 2), std::exp(2.0) - 1.0, 1e-12);
  EXPECT_NEAR(d(0, 3), std::exp(4.0) - 1.0, 1e-12);
  EXPECT_NEAR(d(0, 2), 6.389056, 1e-6);
  EXPECT_NEAR(d(0, 3), 53.598150, 1e-6);
}

TEST(PairwiseAngularD, MatrixInvariants) {
  Rng rng(13);
  const auto d = pairwise_angular_D(random_matrix(9, 5, rng));
  for (Eigen::Index i = 0; i < 9; ++i) {
    EXPECT_NEAR(d(i, i), 0.0, 1e-12);
    for (Eigen::Index j = 0; j < 9; ++j) {
      EXPECT_NEAR(d(i, j), d(j, i), 1e-12);
      EXPECT_GE(d(i, j), 0.0);
      EXPECT_LE(d(i, j), std::expm1(4.0));
    }
  }
}

TEST(PairwiseAngularD, RejectsZeroRow) {
  Matrix x = Matrix::Ones(3, 2);
  x.row(1).setZero();
  EXPECT_THROW(pairwise_angular_D(x), Error);
}

TEST(PairwiseAngularD, InvariantUnderPositiveRowScaling) {
  Rng rng(14);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(6, 4, rng);
    Matrix scaled = x;
    for (Eigen::Index i = 0; i < scaled.rows(); ++i) scaled.row(i) *= scale(rng);
    const Matrix diff = pairwise_angular_D(x).values() - pairwise_angular_D(scaled).values();
    EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(PairwiseAngularD, StrictlyIncreasingOverRotationSweep) {
  double previous = -1.0;
  for (int k = 1; k < 1000; ++k) {
    const double angle = std::numbers::pi * k / 1000.0;
    Matrix x(2, 2);
    x << 1, 0, std::cos(angle), std::sin(angle);
    const double d = pairwise_angular_D(x)(0, 1);
    EXPECT_GT(d, previous) << "angle " << angle;
    previous = d;
  }
}

TEST(AngularDBackward, MatchesFiniteDifferences) {
  Rng rng(15);
  const Matrix x = random_matrix(5, 3, rng);
  const Matrix weights = random_matrix(5, 5, rng);
  auto f = [&](const Vector& v) {
    return pairwise_angular_D(unflatten(v, 5, 3)).values().cwiseProduct(weights).sum();
  };
  const Vector numeric = finite_difference_gradient(f, flatten(x));
  EXPECT_LT(relative_error(flatten(angular_D_backward(x, weights)), numeric), 1e-7);
}

TEST(FiniteDifference, SquaredNorm) {
  const Vector g = finite_difference_gradient([](const Vector& v) { return v.squaredNorm(); }, Vector{{1.0, 2.0}});
  EXPECT_NEAR(g(0), 2.0, 1e-8);
  EXPECT_NEAR(g(1), 4.0, 1e-8);
}

TEST(FiniteDifference, ConstantAndLinear) {
  const Vector x{{0.3, -2.0, 7.5}};
  EXPECT_TRUE(finite_difference_gradient([](const Vector&) { return 4.2; }, x).isZero(0.0));
  const Vector g = finite_difference_gradient([](const Vector& v) { return v.sum(); }, x);
  for (Eigen::Index k = 0; k < g.size(); ++k) EXPECT_NEAR(g(k), 1.0, 1e-10);
}

TEST(FiniteDifference, NonFiniteProbeThrows) {
  try {
    finite_difference_gradient([](const Vector& v) { return std::log(v(0)); }, Vector{{1e-7}}, 1e-5);
    FAIL() << "expected NonFiniteEvaluation";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteEvaluation);
  }
}

TEST(FiniteDifference, AnalyticFunctionsWithinRelativeTolerance) {
  Rng rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector x = random_matrix(6, 1, rng).col(0);
    // f = sum sin(x_k) * x_k^2 + exp(0.1 * sum x)
    auto f = [](const Vector& v) {
      return (v.array().sin() * v.array().square()).sum() + std::exp(0.1 * v.sum());
    };
    Vector analytic = (x.array().cos() * x.array().square() + 2.0 * x.array() * x.array().sin()).matrix();
    analytic.array() += 0.1 * std::exp(0.1 * x.sum());
    EXPECT_LE(relative_error(analytic, finite_difference_gradient(f, x, 1e-5)), 1e-6);
  }
}

}  // namespace
}  // namespace dsam
