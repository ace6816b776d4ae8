// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "dsg/oracle.hpp"

namespace dsg {

/// Measurement noise std used when none is given (0.05, read as a standard deviation).
inline constexpr double kDefaultMeasurementNoiseStd = 0.05;

enum class OperatorKind { Mask, Downsample, Blur, Dense };

/// Row-major signal layout: a line of `cols` cells, or a rows x cols plane.
struct GridShape {
  Eigen::Index rows = 1;
  Eigen::Index cols = 1;
  bool planar = false;

  static GridShape line(Eigen::Index length) { return {1, length, false}; }
  static GridShape plane(Eigen::Index rows, Eigen::Index cols) { return {rows, cols, true}; }
  Eigen::Index size() const { return rows * cols; }
  bool operator==(const GridShape&) const = default;
};

/// A known linear map A: R^n -> R^m with Gaussian measurement noise std sigma_y.
class LinearForwardOperator {
 public:
  OperatorKind kind() const { return kind_; }
  Eigen::Index input_dim() const { return input_dim_; }
  Eigen::Index output_dim() const { return output_dim_; }
  double noise_std() const { return noise_std_; }

  Vector apply(const Vector& x) const;
  Vector apply_transpose(const Vector& u) const;
  Matrix to_dense() const;

  // Kind-specific parameters; empty/zero for other kinds.
  const std::vector<Eigen::Index>& kept_indices() const { return kept_; }
  const GridShape& grid() const { return grid_; }
  int factor() const { return factor_; }
  double kernel_std() const { return kernel_std_; }
  int kernel_size() const { return kernel_size_; }
  /// Normalized blur kernel: 1 x size for lines, size x size for planes.
  const Matrix& kernel() const { return kernel_; }
  const Matrix& matrix() const { return matrix_; }

  friend LinearForwardOperator make_mask_operator_from_indices(Eigen::Index, std::vector<Eigen::Index>, double);
  friend LinearForwardOperator make_downsample_operator(GridShape, int, double);
  friend LinearForwardOperator make_blur_operator(GridShape, double, int, double);
  friend LinearForwardOperator make_dense_operator(Matrix, double);

 private:
  LinearForwardOperator() = default;

  OperatorKind kind_ = OperatorKind::Dense;
  Eigen::Index input_dim_ = 0;
  Eigen::Index output_dim_ = 0;
  double noise_std_ = 0.0;
  std::vector<Eigen::Index> kept_;
  GridShape grid_;
  int factor_ = 0;
  double kernel_std_ = 0.0;
  int kernel_size_ = 0;
  Matrix kernel_;
  Matrix matrix_;
};

/// Number of coordinates a mask with this keep fraction retains: ceil(keep_fraction * n).
Eigen::Index mask_kept_count(Eigen::Index n, double keep_fraction);

/// Keeps a uniformly random subset of ceil(keep_fraction * n) coordinates (sorted).
LinearForwardOperator make_mask_operator(Eigen::Index n, double keep_fraction, std::uint64_t seed,
                                         double noise_std = kDefaultMeasurementNoiseStd);
LinearForwardOperator make_mask_operator_from_indices(Eigen::Index n, std::vector<Eigen::Index> kept,
                                                      double noise_std = kDefaultMeasurementNoiseStd);
/// Block averaging by an integer factor along every grid axis.
LinearForwardOperator make_downsample_operator(GridShape grid, int factor,
                                               double noise_std = kDefaultMeasurementNoiseStd);
/// Periodic convolution with a normalized Gaussian kernel of odd size.
LinearForwardOperator make_blur_operator(GridShape grid, double kernel_std, int kernel_size,
                                         double noise_std = kDefaultMeasurementNoiseStd);
LinearForwardOperator make_dense_operator(Matrix matrix, double noise_std = kDefaultMeasurementNoiseStd);

struct Measurement {
  Vector y;
  std::shared_ptr<const LinearForwardOperator> op;
  std::uint64_t seed = 0;
};

/// y = A x0 + nu, nu ~ N(0, sigma_y^2 I), deterministic in seed.
Measurement measure(std::shared_ptr<const LinearForwardOperator> op, const Vector& x0_true, std::uint64_t seed);

/// A differentiable loss on clean data L(x0).
class GuidanceLoss {
 public:
  virtual ~GuidanceLoss() = default;
  virtual double value(const Vector& x0) const = 0;
  virtual Vector grad_x0(const Vector& x0) const = 0;
};

/// weight * ||A x0 - y||^2.
class QuadraticGuidanceLoss final : public GuidanceLoss {
 public:
  explicit QuadraticGuidanceLoss(Measurement measurement, double weight = 1.0);

  double value(const Vector& x0) const override;
  Vector grad_x0(const Vector& x0) const override;

  /// ||A x0 - y||, unweighted.
  double residual(const Vector& x0) const;
  const Measurement& measurement() const { return measurement_; }
  double weight() const { return weight_; }

 private:
  Measurement measurement_;
  double weight_ = 1.0;
};

struct GuidanceGradient {
  Vector grad;        // grad_{x_t} L(x0_hat(x_t))
  double loss = 0.0;  // L(x0_hat(x_t))
  Vector x0_hat;
};

/// Exact chain rule through the analytic posterior mean.
GuidanceGradient guidance_grad(const Prior& prior, const GuidanceLoss& loss, const NoiseSchedule& schedule,
                               const DiffusionState& state);
/// Same, reusing an already computed x0_hat(x) at signal level alpha_bar.
GuidanceGradient guidance_grad_at(const Prior& prior, const GuidanceLoss& loss, const Vector& x, double alpha_bar,
                                  Vector x0_hat);

}  // namespace dsg
