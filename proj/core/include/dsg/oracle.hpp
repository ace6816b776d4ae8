// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "dsg/random.hpp"
#include "dsg/schedule.hpp"

namespace dsg {

/// Iterate x_t at step index t of some schedule.
struct DiffusionState {
  Vector x;
  int t = 0;
};

/// An analytic data distribution whose noised marginals
///   p_t = law(sqrt(abar) x0 + sqrt(1 - abar) eps)
/// are known in closed form. All methods taking `alpha_bar` require it in
/// (0, 1), i.e. a step t >= 1 of a valid schedule.
class Prior {
 public:
  virtual ~Prior() = default;

  virtual Eigen::Index dimension() const = 0;
  virtual std::vector<Vector> sample_clean(std::size_t count, std::uint64_t seed) const = 0;
  virtual Vector clean_mean() const = 0;

  virtual double log_density(const Vector& x, double alpha_bar) const = 0;
  /// grad_x log p_t(x).
  virtual Vector score(const Vector& x, double alpha_bar) const = 0;
  /// v^T d(x0_hat)/dx = (v + (1 - abar) H v) / sqrt(abar), H the Hessian of log p_t.
  virtual Vector x0hat_vjp(const Vector& x, double alpha_bar, const Vector& v) const = 0;

  /// eps_hat = -sqrt(1 - abar) * score.
  Vector eps_hat(const Vector& x, double alpha_bar) const;
  /// Tweedie posterior mean (x + (1 - abar) * score) / sqrt(abar).
  Vector x0_hat(const Vector& x, double alpha_bar) const;

 protected:
  void check_input(const Vector& x, double alpha_bar) const;
};

/// Mixture of isotropic Gaussians sum_k w_k N(mu_k, s_k^2 I).
class GaussianMixturePrior final : public Prior {
 public:
  GaussianMixturePrior(std::vector<double> weights, std::vector<Vector> means, std::vector<double> stds);

  /// N(mean, std^2 I).
  static GaussianMixturePrior single(Vector mean, double std);

  Eigen::Index dimension() const override { return dimension_; }
  std::vector<Vector> sample_clean(std::size_t count, std::uint64_t seed) const override;
  Vector clean_mean() const override;
  double log_density(const Vector& x, double alpha_bar) const override;
  Vector score(const Vector& x, double alpha_bar) const override;
  Vector x0hat_vjp(const Vector& x, double alpha_bar, const Vector& v) const override;

  std::size_t components() const { return weights_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Vector>& means() const { return means_; }
  const std::vector<double>& stds() const { return stds_; }

 private:
  struct Posterior;
  Posterior responsibilities(const Vector& x, double alpha_bar) const;

  Eigen::Index dimension_ = 0;
  std::vector<double> weights_;
  std::vector<Vector> means_;
  std::vector<double> stds_;
};

/// Clean data x0 = U z + c, z ~ N(0, tau^2 I_k), with column-orthonormal U.
/// The noised covariance abar tau^2 U U^T + (1 - abar) I is inverted through
/// its two eigenvalues (in-plane / orthogonal) without forming n x n matrices.
class SubspacePrior final : public Prior {
 public:
  /// Requires U^T U = I to 1e-10.
  SubspacePrior(Matrix basis, double latent_std, Vector offset);

  /// Accepts a basis with orthonormality drift and re-orthonormalizes it
  /// (thin QR) when the drift exceeds 1e-10.
  static SubspacePrior from_raw_basis(Matrix basis, double latent_std, Vector offset);

  /// Uniformly random k-dimensional subspace of R^n, zero offset.
  static SubspacePrior random(Eigen::Index n, Eigen::Index k, double latent_std, std::uint64_t seed);

  Eigen::Index dimension() const override { return basis_.rows(); }
  Eigen::Index intrinsic_dimension() const { return basis_.cols(); }
  std::vector<Vector> sample_clean(std::size_t count, std::uint64_t seed) const override;
  Vector clean_mean() const override { return offset_; }
  double log_density(const Vector& x, double alpha_bar) const override;
  Vector score(const Vector& x, double alpha_bar) const override;
  Vector x0hat_vjp(const Vector& x, double alpha_bar, const Vector& v) const override;

  /// ||(I - U U^T)(x - sqrt(abar) c)||, defined for abar in [0, 1].
  double off_manifold_distance(const Vector& x, double alpha_bar) const;

  const Matrix& basis() const { return basis_; }
  double latent_std() const { return latent_std_; }
  const Vector& offset() const { return offset_; }

 private:
  Vector apply_precision(const Vector& d, double alpha_bar) const;

  Matrix basis_;
  double latent_std_ = 1.0;
  Vector offset_;
};

/// Largest |(U^T U - I)_ij|.
double orthonormality_drift(const Matrix& basis);

// Schedule-indexed conveniences; t must lie in 1..T.
Vector score(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state);
Vector eps_hat(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state);
Vector x0_hat(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state);
Vector x0hat_vjp(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state, const Vector& v);

}  // namespace dsg
