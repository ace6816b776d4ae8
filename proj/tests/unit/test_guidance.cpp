// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <memory>
#include <vector>

#include <gtest/gtest.h>

#include <dsg/guidance.hpp>

#include "oracles.hpp"

namespace dsg {
namespace {

std::vector<LinearForwardOperator> operator_zoo() {
  std::mt19937_64 rng(1);
  Matrix dense(3, 16);
  for (Eigen::Index j = 0; j < 16; ++j) dense.col(j) = testing::gaussian_vector(rng, 3);
  return {
      make_mask_operator(16, 0.3, 2),
      make_downsample_operator(GridShape::line(16), 4),
      make_downsample_operator(GridShape::plane(4, 4), 2),
      make_blur_operator(GridShape::line(16), 1.2, 5),
      make_blur_operator(GridShape::plane(4, 4), 0.8, 3),
      make_dense_operator(dense),
  };
}

TEST(Mask, KeptCount) {
  EXPECT_EQ(mask_kept_count(100, 0.08), 8);
  EXPECT_EQ(mask_kept_count(256, 0.08), 21);
  EXPECT_EQ(mask_kept_count(10, 1.0), 10);
  EXPECT_EQ(mask_kept_count(10, 1e-6), 1);
  EXPECT_THROW(mask_kept_count(10, 0.0), std::invalid_argument);
  EXPECT_THROW(mask_kept_count(10, 1.1), std::invalid_argument);
  const auto op = make_mask_operator(100, 0.08, 4);
  EXPECT_EQ(op.output_dim(), 8);
  EXPECT_TRUE(std::is_sorted(op.kept_indices().begin(), op.kept_indices().end()));
}

TEST(Mask, FullKeepIsIdentity) {
  const auto op = make_mask_operator(7, 1.0, 3);
  EXPECT_TRUE(op.to_dense().isIdentity());
}

TEST(Mask, SelectsKeptCoordinates) {
  const auto op = make_mask_operator_from_indices(5, {3, 0});
  Vector x(5);
  x << 10, 11, 12, 13, 14;
  const Vector y = op.apply(x);
  ASSERT_EQ(y.size(), 2);
  EXPECT_EQ(y[0], 10);
  EXPECT_EQ(y[1], 13);
  EXPECT_THROW(make_mask_operator_from_indices(5, {1, 1}), std::invalid_argument);
  EXPECT_THROW(make_mask_operator_from_indices(5, {5}), std::invalid_argument);
  EXPECT_THROW(make_mask_operator_from_indices(5, {}), std::invalid_argument);
}

TEST(Mask, SubsetDependsOnSeed) {
  EXPECT_EQ(make_mask_operator(64, 0.25, 9).kept_indices(), make_mask_operator(64, 0.25, 9).kept_indices());
  EXPECT_NE(make_mask_operator(64, 0.25, 9).kept_indices(), make_mask_operator(64, 0.25, 10).kept_indices());
}

TEST(Downsample, LineAverages) {
  const auto op = make_downsample_operator(GridShape::line(4), 2);
  Vector x(4);
  x << 1, 3, 5, 7;
  const Vector y = op.apply(x);
  ASSERT_EQ(y.size(), 2);
  EXPECT_DOUBLE_EQ(y[0], 2.0);
  EXPECT_DOUBLE_EQ(y[1], 6.0);
}

TEST(Downsample, PlaneAveragesBlocks) {
  const auto op = make_downsample_operator(GridShape::plane(16, 16), 4);
  EXPECT_EQ(op.output_dim(), 16);
  Vector x(256);
  for (Eigen::Index i = 0; i < 256; ++i) x[i] = static_cast<double>(i);
  const Vector y = op.apply(x);
  // Block (0, 0) covers rows 0..3, cols 0..3: mean of r * 16 + c.
  double want = 0.0;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) want += r * 16 + c;
  EXPECT_DOUBLE_EQ(y[0], want / 16.0);
  EXPECT_THROW(make_downsample_operator(GridShape::plane(6, 8), 4), std::invalid_argument);
  EXPECT_THROW(make_downsample_operator(GridShape::line(8), 1), std::invalid_argument);
}

TEST(Blur, MatchesDenseLineOracle) {
  const auto op = make_blur_operator(GridShape::line(12), 1.3, 5);
  EXPECT_LT((op.to_dense() - testing::dense_line_blur(12, 1.3, 5)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Blur, MatchesDensePlaneOracle) {
  const auto op = make_blur_operator(GridShape::plane(5, 6), 0.9, 3);
  EXPECT_LT((op.to_dense() - testing::dense_plane_blur(5, 6, 0.9, 3)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Blur, UnitKernelIsIdentity) {
  EXPECT_TRUE(make_blur_operator(GridShape::plane(4, 5), 2.0, 1).to_dense().isIdentity(1e-15));
}

TEST(Blur, PreservesConstantsAndReproducesKernel) {
  const auto op = make_blur_operator(GridShape::line(9), 1.0, 5);
  EXPECT_TRUE(op.apply(Vector::Constant(9, 3.5)).isApprox(Vector::Constant(9, 3.5), 1e-14));
  Vector delta = Vector::Zero(9);
  delta[4] = 1.0;
  const Vector y = op.apply(delta);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(y[2 + i], op.kernel()(0, i), 1e-15);
  EXPECT_NEAR(y.sum(), 1.0, 1e-14);
  EXPECT_THROW(make_blur_operator(GridShape::line(9), 1.0, 4), std::invalid_argument);
  EXPECT_THROW(make_blur_operator(GridShape::line(3), 1.0, 5), std::invalid_argument);
}

TEST(Operators, AdjointIdentity) {
  std::mt19937_64 rng(5);
  for (const auto& op : operator_zoo()) {
    for (int trial = 0; trial < 100; ++trial) {
      const Vector x = testing::gaussian_vector(rng, op.input_dim());
      const Vector u = testing::gaussian_vector(rng, op.output_dim());
      const double lhs = op.apply(x).dot(u);
      const double rhs = x.dot(op.apply_transpose(u));
      ASSERT_NEAR(lhs, rhs, 1e-10 * (1.0 + std::abs(lhs)));
    }
  }
}

TEST(Operators, Linearity) {
  std::mt19937_64 rng(6);
  for (const auto& op : operator_zoo()) {
    for (int trial = 0; trial < 100; ++trial) {
      const Vector x = testing::gaussian_vector(rng, op.input_dim());
      const Vector z = testing::gaussian_vector(rng, op.input_dim());
      const double a = testing::gaussian_vector(rng, 1)[0];
      const Vector lhs = op.apply(a * x + z);
      const Vector rhs = a * op.apply(x) + op.apply(z);
      ASSERT_LT((lhs - rhs).norm(), 1e-10 * (1.0 + rhs.norm()));
    }
  }
}

TEST(Operators, DenseFormAgreesWithStructuredGradients) {
  std::mt19937_64 rng(7);
  for (const auto& op : operator_zoo()) {
    const Matrix A = op.to_dense();
    const Vector x = testing::gaussian_vector(rng, op.input_dim());
    const Vector r = testing::gaussian_vector(rng, op.output_dim());
    EXPECT_LT((op.apply(x) - A * x).norm(), 1e-10);
    EXPECT_LT((op.apply_transpose(r) - A.transpose() * r).norm(), 1e-10);
  }
}

TEST(Operators, DimensionChecks) {
  const auto op = make_dense_operator(Matrix::Ones(2, 3));
  EXPECT_THROW(op.apply(Vector::Zero(2)), std::invalid_argument);
  EXPECT_THROW(op.apply_transpose(Vector::Zero(3)), std::invalid_argument);
  EXPECT_THROW(make_dense_operator(Matrix::Ones(2, 3), -0.1), std::invalid_argument);
  EXPECT_EQ(op.noise_std(), kDefaultMeasurementNoiseStd);
}

TEST(Measure, NoiselessIsExact) {
  auto op = std::make_shared<const LinearForwardOperator>(make_downsample_operator(GridShape::line(4), 2, 0.0));
  Vector x(4);
  x << 1, 3, 5, 7;
  const auto m = measure(op, x, 3);
  EXPECT_EQ(m.y, op->apply(x));
  EXPECT_EQ(m.seed, 3u);
}

TEST(Measure, NoiseVarianceAndDeterminism) {
  auto op = std::make_shared<const LinearForwardOperator>(make_mask_operator(10, 1.0, 1, 0.3));
  const Vector x = Vector::Ones(10);
  double sum_sq = 0.0;
  std::size_t count = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const Vector nu = measure(op, x, seed).y - x;
    sum_sq += nu.squaredNorm();
    count += 10;
  }
  EXPECT_NEAR(sum_sq / static_cast<double>(count), 0.09, 0.05 * 0.09);
  EXPECT_EQ(measure(op, x, 42).y, measure(op, x, 42).y);
  EXPECT_THROW(measure(nullptr, x, 1), std::invalid_argument);
  EXPECT_THROW(measure(op, Vector::Ones(3), 1), std::invalid_argument);
}

TEST(QuadraticLoss, GradientFormula) {
  auto op = std::make_shared<const LinearForwardOperator>(make_blur_operator(GridShape::line(8), 1.0, 3));
  std::mt19937_64 rng(8);
  const Vector y = testing::gaussian_vector(rng, 8);
  const QuadraticGuidanceLoss loss(Measurement{y, op, 0});
  const Vector x = testing::gaussian_vector(rng, 8);
  const Matrix A = testing::dense_line_blur(8, 1.0, 3);
  EXPECT_NEAR(loss.value(x), (A * x - y).squaredNorm(), 1e-12);
  EXPECT_LT((loss.grad_x0(x) - 2.0 * A.transpose() * (A * x - y)).norm(), 1e-12);
  const auto f = [&](const Vector& p) { return loss.value(p); };
  EXPECT_LT(testing::relative_error(loss.grad_x0(x), testing::central_diff_gradient(f, x, 1e-5)), 1e-7);
  EXPECT_NEAR(loss.residual(x), (A * x - y).norm(), 1e-12);
}

TEST(QuadraticLoss, Validation) {
  auto op = std::make_shared<const LinearForwardOperator>(make_dense_operator(Matrix::Ones(2, 3)));
  EXPECT_THROW(QuadraticGuidanceLoss(Measurement{Vector::Zero(3), op, 0}), std::invalid_argument);
  EXPECT_THROW(QuadraticGuidanceLoss(Measurement{Vector::Zero(2), nullptr, 0}), std::invalid_argument);
  EXPECT_THROW(QuadraticGuidanceLoss(Measurement{Vector::Zero(2), op, 0}, 0.0), std::invalid_argument);
}

TEST(GuidanceGrad, SingleGaussianChainRule) {
  // Prior N(0, I): x0_hat = sqrt(abar) x, so grad = sqrt(abar) * 2 A^T (A sqrt(abar) x - y).
  const auto prior = GaussianMixturePrior::single(Vector::Zero(3), 1.0);
  Matrix Amat(2, 3);
  Amat << 1, 2, 0, 0, -1, 3;
  auto op = std::make_shared<const LinearForwardOperator>(make_dense_operator(Amat));
  Vector y(2);
  y << 0.5, -1.0;
  const QuadraticGuidanceLoss loss(Measurement{y, op, 0});
  const auto schedule = NoiseSchedule::from_alpha_bar({1.0, 0.64, 0.25});
  Vector x(3);
  x << 1.0, -2.0, 0.5;
  const auto g = guidance_grad(prior, loss, schedule, DiffusionState{x, 2});
  const double s = 0.5;
  const Vector want = s * 2.0 * Amat.transpose() * (Amat * (s * x) - y);
  EXPECT_LT((g.grad - want).norm(), 1e-13);
  EXPECT_NEAR(g.loss, (Amat * (s * x) - y).squaredNorm(), 1e-13);
  EXPECT_LT((g.x0_hat - s * x).norm(), 1e-15);
}

TEST(GuidanceGrad, MatchesFiniteDifferenceThroughMixture) {
  Vector m(4);
  m << 1.0, -0.5, 0.0, 2.0;
  const GaussianMixturePrior prior({0.6, 0.4}, {m, -m}, {0.5, 0.9});
  auto op = std::make_shared<const LinearForwardOperator>(make_mask_operator(4, 0.5, 3));
  Vector y(2);
  y << 0.3, -0.7;
  const QuadraticGuidanceLoss loss(Measurement{y, op, 0});
  const auto schedule = NoiseSchedule::linear(50, 1e-3, 0.05);
  std::mt19937_64 rng(9);
  for (int t : {5, 25, 50}) {
    const Vector x = testing::gaussian_vector(rng, 4);
    const auto g = guidance_grad(prior, loss, schedule, DiffusionState{x, t});
    const auto f = [&](const Vector& p) { return loss.value(prior.x0_hat(p, schedule.alpha_bar(t))); };
    const Vector fd = testing::central_diff_gradient(f, x, 1e-5);
    EXPECT_LT(testing::relative_error(g.grad, fd), 1e-6);
  }
}

TEST(GuidanceGrad, ZeroWhenPosteriorMeanFitsMeasurement) {
  const auto prior = GaussianMixturePrior::single(Vector::Zero(2), 1.0);
  auto op = std::make_shared<const LinearForwardOperator>(make_dense_operator(Matrix::Identity(2, 2)));
  Vector x(2);
  x << 2.0, 4.0;
  const auto schedule = NoiseSchedule::from_alpha_bar({1.0, 0.25});
  const QuadraticGuidanceLoss loss(Measurement{prior.x0_hat(x, 0.25), op, 0});
  EXPECT_EQ(guidance_grad(prior, loss, schedule, DiffusionState{x, 1}).grad.norm(), 0.0);
}

}  // namespace
}  // namespace dsg
