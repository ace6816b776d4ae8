// SPDX-License-Identifier: Apache-2.0
#include "dsg/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dsg {

namespace {

void check_noise_std(double noise_std) {
  if (!(noise_std >= 0.0)) throw std::invalid_argument("operator: measurement noise std must be >= 0");
}

void check_grid(const GridShape& grid) {
  if (grid.rows < 1 || grid.cols < 1) throw std::invalid_argument("operator: grid sides must be >= 1");
  if (!grid.planar && grid.rows != 1) throw std::invalid_argument("operator: a line grid has exactly one row");
}

Eigen::Index wrap(Eigen::Index i, Eigen::Index size) {
  const Eigen::Index r = i % size;
  return r < 0 ? r + size : r;
}

}  // namespace

Eigen::Index mask_kept_count(Eigen::Index n, double keep_fraction) {
  if (n < 1) throw std::invalid_argument("mask: n must be >= 1");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw std::invalid_argument("mask: keep_fraction must lie in (0, 1]");
  }
  // The relative slack keeps products like 0.08 * 100 from rounding up to 9.
  const double target = keep_fraction * static_cast<double>(n) * (1.0 - 1e-12);
  return std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::ceil(target)), 1, n);
}

LinearForwardOperator make_mask_operator(Eigen::Index n, double keep_fraction, std::uint64_t seed,
                                         double noise_std) {
  const Eigen::Index kept_count = mask_kept_count(n, keep_fraction);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(derive_seed(seed, 0));
  // Partial Fisher-Yates: the first kept_count slots become a uniform subset.
  for (Eigen::Index i = 0; i < kept_count; ++i) {
    const auto span = static_cast<std::uint64_t>(n - i);
    const auto j = i + static_cast<Eigen::Index>(rng() % span);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  order.resize(static_cast<std::size_t>(kept_count));
  return make_mask_operator_from_indices(n, std::move(order), noise_std);
}

LinearForwardOperator make_mask_operator_from_indices(Eigen::Index n, std::vector<Eigen::Index> kept,
                                                      double noise_std) {
  if (n < 1) throw std::invalid_argument("mask: n must be >= 1");
  check_noise_std(noise_std);
  if (kept.empty()) throw std::invalid_argument("mask: at least one kept index required");
  std::sort(kept.begin(), kept.end());
  if (std::adjacent_find(kept.begin(), kept.end()) != kept.end()) {
    throw std::invalid_argument("mask: kept indices must be distinct");
  }
  if (kept.front() < 0 || kept.back() >= n) throw std::invalid_argument("mask: kept index out of range");
  LinearForwardOperator op;
  op.kind_ = OperatorKind::Mask;
  op.input_dim_ = n;
  op.output_dim_ = static_cast<Eigen::Index>(kept.size());
  op.noise_std_ = noise_std;
  op.kept_ = std::move(kept);
  return op;
}

LinearForwardOperator make_downsample_operator(GridShape grid, int factor, double noise_std) {
  check_grid(grid);
  check_noise_std(noise_std);
  if (factor < 2) throw std::invalid_argument("downsample: factor must be >= 2");
  if (grid.cols % factor != 0 || (grid.planar && grid.rows % factor != 0)) {
    throw std::invalid_argument("downsample: grid sides must be divisible by the factor");
  }
  LinearForwardOperator op;
  op.kind_ = OperatorKind::Downsample;
  op.input_dim_ = grid.size();
  op.output_dim_ = grid.planar ? (grid.rows / factor) * (grid.cols / factor) : grid.cols / factor;
  op.noise_std_ = noise_std;
  op.grid_ = grid;
  op.factor_ = factor;
  return op;
}

LinearForwardOperator make_blur_operator(GridShape grid, double kernel_std, int kernel_size, double noise_std) {
  check_grid(grid);
  check_noise_std(noise_std);
  if (kernel_size < 1 || kernel_size % 2 == 0) throw std::invalid_argument("blur: kernel_size must be odd");
  const Eigen::Index smallest = grid.planar ? std::min(grid.rows, grid.cols) : grid.cols;
  if (kernel_size > smallest) throw std::invalid_argument("blur: kernel_size exceeds the smallest grid side");
  if (!(kernel_std > 0.0)) throw std::invalid_argument("blur: kernel_std must be > 0");

  const int half = kernel_size / 2;
  Vector profile(kernel_size);
  for (int i = 0; i < kernel_size; ++i) {
    const double d = i - half;
    profile[i] = std::exp(-0.5 * d * d / (kernel_std * kernel_std));
  }
  Matrix kernel = grid.planar ? Matrix(profile * profile.transpose()) : Matrix(profile.transpose());
  kernel /= kernel.sum();

  LinearForwardOperator op;
  op.kind_ = OperatorKind::Blur;
  op.input_dim_ = grid.size();
  op.output_dim_ = grid.size();
  op.noise_std_ = noise_std;
  op.grid_ = grid;
  op.kernel_std_ = kernel_std;
  op.kernel_size_ = kernel_size;
  op.kernel_ = std::move(kernel);
  return op;
}

LinearForwardOperator make_dense_operator(Matrix matrix, double noise_std) {
  check_noise_std(noise_std);
  if (matrix.rows() < 1 || matrix.cols() < 1) throw std::invalid_argument("dense: matrix must be non-empty");
  LinearForwardOperator op;
  op.kind_ = OperatorKind::Dense;
  op.input_dim_ = matrix.cols();
  op.output_dim_ = matrix.rows();
  op.noise_std_ = noise_std;
  op.matrix_ = std::move(matrix);
  return op;
}

Vector LinearForwardOperator::apply(const Vector& x) const {
  if (x.size() != input_dim_) {
    throw std::invalid_argument("operator: input has dimension " + std::to_string(x.size()) + ", expected " +
                                std::to_string(input_dim_));
  }
  Vector out = Vector::Zero(output_dim_);
  switch (kind_) {
    case OperatorKind::Mask:
      for (std::size_t i = 0; i < kept_.size(); ++i) out[static_cast<Eigen::Index>(i)] = x[kept_[i]];
      break;
    case OperatorKind::Downsample: {
      const Eigen::Index f = factor_;
      const Eigen::Index out_cols = grid_.cols / f;
      const Eigen::Index block_rows = grid_.planar ? f : 1;
      const double scale = 1.0 / static_cast<double>(block_rows * f);
      for (Eigen::Index r = 0; r < grid_.rows; ++r) {
        for (Eigen::Index c = 0; c < grid_.cols; ++c) {
          out[(r / block_rows) * out_cols + c / f] += scale * x[r * grid_.cols + c];
        }
      }
      break;
    }
    case OperatorKind::Blur: {
      const Eigen::Index hr = kernel_.rows() / 2;
      const Eigen::Index hc = kernel_.cols() / 2;
      for (Eigen::Index r = 0; r < grid_.rows; ++r) {
        for (Eigen::Index c = 0; c < grid_.cols; ++c) {
          double acc = 0.0;
          for (Eigen::Index i = 0; i < kernel_.rows(); ++i) {
            const Eigen::Index rr = wrap(r + i - hr, grid_.rows);
            for (Eigen::Index j = 0; j < kernel_.cols(); ++j) {
              acc += kernel_(i, j) * x[rr * grid_.cols + wrap(c + j - hc, grid_.cols)];
            }
          }
          out[r * grid_.cols + c] = acc;
        }
      }
      break;
    }
    case OperatorKind::Dense:
      out = matrix_ * x;
      break;
  }
  return out;
}

Vector LinearForwardOperator::apply_transpose(const Vector& u) const {
  if (u.size() != output_dim_) {
    throw std::invalid_argument("operator: adjoint input has dimension " + std::to_string(u.size()) +
                                ", expected " + std::to_string(output_dim_));
  }
  Vector out = Vector::Zero(input_dim_);
  switch (kind_) {
    case OperatorKind::Mask:
      for (std::size_t i = 0; i < kept_.size(); ++i) out[kept_[i]] = u[static_cast<Eigen::Index>(i)];
      break;
    case OperatorKind::Downsample: {
      const Eigen::Index f = factor_;
      const Eigen::Index out_cols = grid_.cols / f;
      const Eigen::Index block_rows = grid_.planar ? f : 1;
      const double scale = 1.0 / static_cast<double>(block_rows * f);
      for (Eigen::Index r = 0; r < grid_.rows; ++r) {
        for (Eigen::Index c = 0; c < grid_.cols; ++c) {
          out[r * grid_.cols + c] = scale * u[(r / block_rows) * out_cols + c / f];
        }
      }
      break;
    }
    case OperatorKind::Blur: {
      const Eigen::Index hr = kernel_.rows() / 2;
      const Eigen::Index hc = kernel_.cols() / 2;
      for (Eigen::Index r = 0; r < grid_.rows; ++r) {
        for (Eigen::Index c = 0; c < grid_.cols; ++c) {
          const double value = u[r * grid_.cols + c];
          for (Eigen::Index i = 0; i < kernel_.rows(); ++i) {
            const Eigen::Index rr = wrap(r + i - hr, grid_.rows);
            for (Eigen::Index j = 0; j < kernel_.cols(); ++j) {
              out[rr * grid_.cols + wrap(c + j - hc, grid_.cols)] += kernel_(i, j) * value;
            }
          }
        }
      }
      break;
    }
    case OperatorKind::Dense:
      out = matrix_.transpose() * u;
      break;
  }
  return out;
}

Matrix LinearForwardOperator::to_dense() const {
  if (kind_ == OperatorKind::Dense) return matrix_;
  Matrix dense(output_dim_, input_dim_);
  Vector basis = Vector::Zero(input_dim_);
  for (Eigen::Index j = 0; j < input_dim_; ++j) {
    basis[j] = 1.0;
    dense.col(j) = apply(basis);
    basis[j] = 0.0;
  }
  return dense;
}

Measurement measure(std::shared_ptr<const LinearForwardOperator> op, const Vector& x0_true, std::uint64_t seed) {
  if (!op) throw std::invalid_argument("measure: operator is null");
  if (x0_true.size() != op->input_dim()) throw std::invalid_argument("measure: x0 dimension mismatch");
  Vector y = op->apply(x0_true);
  if (op->noise_std() > 0.0) {
    Rng rng(derive_seed(seed, 0));
    y += op->noise_std() * standard_normal_vector(rng, y.size());
  }
  return Measurement{std::move(y), std::move(op), seed};
}

QuadraticGuidanceLoss::QuadraticGuidanceLoss(Measurement measurement, double weight)
    : measurement_(std::move(measurement)), weight_(weight) {
  if (!measurement_.op) throw std::invalid_argument("loss: measurement has no operator");
  if (measurement_.y.size() != measurement_.op->output_dim()) {
    throw std::invalid_argument("loss: measurement dimension does not match the operator");
  }
  if (!(weight_ > 0.0)) throw std::invalid_argument("loss: weight must be > 0");
}

double QuadraticGuidanceLoss::value(const Vector& x0) const {
  return weight_ * (measurement_.op->apply(x0) - measurement_.y).squaredNorm();
}

Vector QuadraticGuidanceLoss::grad_x0(const Vector& x0) const {
  const Vector r = measurement_.op->apply(x0) - measurement_.y;
  return (2.0 * weight_) * measurement_.op->apply_transpose(r);
}

double QuadraticGuidanceLoss::residual(const Vector& x0) const {
  return (measurement_.op->apply(x0) - measurement_.y).norm();
}

GuidanceGradient guidance_grad_at(const Prior& prior, const GuidanceLoss& loss, const Vector& x, double alpha_bar,
                                  Vector x0_hat) {
  GuidanceGradient out;
  out.loss = loss.value(x0_hat);
  out.grad = prior.x0hat_vjp(x, alpha_bar, loss.grad_x0(x0_hat));
  out.x0_hat = std::move(x0_hat);
  return out;
}

GuidanceGradient guidance_grad(const Prior& prior, const GuidanceLoss& loss, const NoiseSchedule& schedule,
                               const DiffusionState& state) {
  Vector xh = x0_hat(prior, schedule, state);
  return guidance_grad_at(prior, loss, state.x, schedule.alpha_bar(state.t), std::move(xh));
}

}  // namespace dsg
