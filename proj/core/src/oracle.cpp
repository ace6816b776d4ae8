// SPDX-License-Identifier: Apache-2.0
#include "dsg/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/QR>

namespace dsg {

namespace {

constexpr double kWeightSumTolerance = 1e-12;
constexpr double kOrthonormalityTolerance = 1e-10;
const double kLogTwoPi = std::log(2.0 * std::numbers::pi);

}  // namespace

void Prior::check_input(const Vector& x, double alpha_bar) const {
  if (x.size() != dimension()) {
    throw std::invalid_argument("prior: state has dimension " + std::to_string(x.size()) + ", expected " +
                                std::to_string(dimension()));
  }
  if (!(alpha_bar > 0.0 && alpha_bar < 1.0)) {
    throw std::domain_error("prior: alpha_bar must lie in (0, 1) (step t >= 1)");
  }
}

Vector Prior::eps_hat(const Vector& x, double alpha_bar) const {
  return -std::sqrt(1.0 - alpha_bar) * score(x, alpha_bar);
}

Vector Prior::x0_hat(const Vector& x, double alpha_bar) const {
  return (x + (1.0 - alpha_bar) * score(x, alpha_bar)) / std::sqrt(alpha_bar);
}

// ---------------------------------------------------------------------------
// Gaussian mixture

struct GaussianMixturePrior::Posterior {
  std::vector<double> resp;      // responsibilities r_k(x)
  std::vector<Vector> grad;      // grad log N_k = -(x - m_k) / v_k
  std::vector<double> variance;  // v_k = abar s_k^2 + 1 - abar
  double log_density = 0.0;
};

GaussianMixturePrior::GaussianMixturePrior(std::vector<double> weights, std::vector<Vector> means,
                                           std::vector<double> stds)
    : weights_(std::move(weights)), means_(std::move(means)), stds_(std::move(stds)) {
  if (weights_.empty()) throw std::invalid_argument("gmm: at least one component required");
  if (means_.size() != weights_.size() || stds_.size() != weights_.size()) {
    throw std::invalid_argument("gmm: weights, means and stds must have equal length");
  }
  dimension_ = means_.front().size();
  if (dimension_ < 1) throw std::invalid_argument("gmm: dimension must be >= 1");
  double total = 0.0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    if (!(weights_[k] > 0.0)) throw std::invalid_argument("gmm: weights must be > 0");
    if (!(stds_[k] >= 0.0)) throw std::invalid_argument("gmm: component stds must be >= 0");
    if (means_[k].size() != dimension_) throw std::invalid_argument("gmm: all means must share one dimension");
    total += weights_[k];
  }
  if (std::abs(total - 1.0) > kWeightSumTolerance) throw std::invalid_argument("gmm: weights must sum to 1");
}

GaussianMixturePrior GaussianMixturePrior::single(Vector mean, double std) {
  return GaussianMixturePrior({1.0}, {std::move(mean)}, {std});
}

std::vector<Vector> GaussianMixturePrior::sample_clean(std::size_t count, std::uint64_t seed) const {
  if (count < 1) throw std::invalid_argument("gmm: sample count must be >= 1");
  Rng rng(derive_seed(seed, 0));
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    double u = uniform01(rng);
    std::size_t k = 0;
    while (k + 1 < weights_.size() && u >= weights_[k]) {
      u -= weights_[k];
      ++k;
    }
    out.push_back(means_[k] + stds_[k] * standard_normal_vector(rng, dimension_));
  }
  return out;
}

Vector GaussianMixturePrior::clean_mean() const {
  Vector m = Vector::Zero(dimension_);
  for (std::size_t k = 0; k < weights_.size(); ++k) m += weights_[k] * means_[k];
  return m;
}

GaussianMixturePrior::Posterior GaussianMixturePrior::responsibilities(const Vector& x, double alpha_bar) const {
  check_input(x, alpha_bar);
  const double root = std::sqrt(alpha_bar);
  const std::size_t K = weights_.size();
  Posterior post;
  post.resp.resize(K);
  post.grad.resize(K);
  post.variance.resize(K);
  std::vector<double> log_terms(K);
  const auto n = static_cast<double>(dimension_);
  for (std::size_t k = 0; k < K; ++k) {
    const double v = alpha_bar * stds_[k] * stds_[k] + (1.0 - alpha_bar);
    Vector diff = x - root * means_[k];
    log_terms[k] = std::log(weights_[k]) - 0.5 * diff.squaredNorm() / v - 0.5 * n * (kLogTwoPi + std::log(v));
    post.grad[k] = -diff / v;
    post.variance[k] = v;
  }
  const double peak = *std::max_element(log_terms.begin(), log_terms.end());
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    post.resp[k] = std::exp(log_terms[k] - peak);
    total += post.resp[k];
  }
  for (double& r : post.resp) r /= total;
  post.log_density = peak + std::log(total);
  return post;
}

double GaussianMixturePrior::log_density(const Vector& x, double alpha_bar) const {
  return responsibilities(x, alpha_bar).log_density;
}

Vector GaussianMixturePrior::score(const Vector& x, double alpha_bar) const {
  const Posterior post = responsibilities(x, alpha_bar);
  Vector s = Vector::Zero(dimension_);
  for (std::size_t k = 0; k < weights_.size(); ++k) s += post.resp[k] * post.grad[k];
  return s;
}

Vector GaussianMixturePrior::x0hat_vjp(const Vector& x, double alpha_bar, const Vector& v) const {
  if (v.size() != dimension_) throw std::invalid_argument("gmm: cotangent dimension mismatch");
  const Posterior post = responsibilities(x, alpha_bar);
  // H = sum_k r_k (-I / v_k + g_k g_k^T) - s s^T
  Vector s = Vector::Zero(dimension_);
  Vector hv = Vector::Zero(dimension_);
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const double r = post.resp[k];
    s += r * post.grad[k];
    hv += r * (post.grad[k] * post.grad[k].dot(v) - v / post.variance[k]);
  }
  hv -= s * s.dot(v);
  return (v + (1.0 - alpha_bar) * hv) / std::sqrt(alpha_bar);
}

// ---------------------------------------------------------------------------
// Subspace Gaussian

double orthonormality_drift(const Matrix& basis) {
  const Matrix gram = basis.transpose() * basis;
  return (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

SubspacePrior::SubspacePrior(Matrix basis, double latent_std, Vector offset)
    : basis_(std::move(basis)), latent_std_(latent_std), offset_(std::move(offset)) {
  const Eigen::Index n = basis_.rows();
  const Eigen::Index k = basis_.cols();
  if (n < 1 || k < 1 || k > n) throw std::invalid_argument("subspace: need 1 <= k <= n");
  if (!(latent_std_ > 0.0)) throw std::invalid_argument("subspace: latent_std must be > 0");
  if (offset_.size() != n) throw std::invalid_argument("subspace: offset dimension must equal n");
  if (orthonormality_drift(basis_) > kOrthonormalityTolerance) {
    throw std::invalid_argument("subspace: basis columns are not orthonormal");
  }
}

SubspacePrior SubspacePrior::from_raw_basis(Matrix basis, double latent_std, Vector offset) {
  if (basis.rows() >= 1 && basis.cols() >= 1 && basis.cols() <= basis.rows() &&
      orthonormality_drift(basis) > kOrthonormalityTolerance) {
    Eigen::HouseholderQR<Matrix> qr(basis);
    Matrix q = qr.householderQ() * Matrix::Identity(basis.rows(), basis.cols());
    // Keep the orientation of each input column.
    const Matrix r = qr.matrixQR().topRows(basis.cols()).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    }
    basis = std::move(q);
  }
  return SubspacePrior(std::move(basis), latent_std, std::move(offset));
}

SubspacePrior SubspacePrior::random(Eigen::Index n, Eigen::Index k, double latent_std, std::uint64_t seed) {
  if (n < 1 || k < 1 || k > n) throw std::invalid_argument("subspace: need 1 <= k <= n");
  Rng rng(derive_seed(seed, 0));
  Matrix g(n, k);
  for (Eigen::Index j = 0; j < k; ++j) fill_standard_normal(rng, g.col(j));
  return from_raw_basis(std::move(g), latent_std, Vector::Zero(n));
}

std::vector<Vector> SubspacePrior::sample_clean(std::size_t count, std::uint64_t seed) const {
  if (count < 1) throw std::invalid_argument("subspace: sample count must be >= 1");
  Rng rng(derive_seed(seed, 0));
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(basis_ * (latent_std_ * standard_normal_vector(rng, basis_.cols())) + offset_);
  }
  return out;
}

Vector SubspacePrior::apply_precision(const Vector& d, double alpha_bar) const {
  const double v_plane = alpha_bar * latent_std_ * latent_std_ + (1.0 - alpha_bar);
  const double v_perp = 1.0 - alpha_bar;
  const Vector plane = basis_ * (basis_.transpose() * d);
  return (d - plane) / v_perp + plane / v_plane;
}

double SubspacePrior::log_density(const Vector& x, double alpha_bar) const {
  check_input(x, alpha_bar);
  const double v_plane = alpha_bar * latent_std_ * latent_std_ + (1.0 - alpha_bar);
  const double v_perp = 1.0 - alpha_bar;
  const Vector d = x - std::sqrt(alpha_bar) * offset_;
  const Vector coords = basis_.transpose() * d;
  const double plane_sq = coords.squaredNorm();
  const double perp_sq = (d - basis_ * coords).squaredNorm();
  const auto n = static_cast<double>(dimension());
  const auto k = static_cast<double>(intrinsic_dimension());
  return -0.5 * (plane_sq / v_plane + perp_sq / v_perp) -
         0.5 * (k * std::log(v_plane) + (n - k) * std::log(v_perp) + n * kLogTwoPi);
}

Vector SubspacePrior::score(const Vector& x, double alpha_bar) const {
  check_input(x, alpha_bar);
  return -apply_precision(x - std::sqrt(alpha_bar) * offset_, alpha_bar);
}

Vector SubspacePrior::x0hat_vjp(const Vector& x, double alpha_bar, const Vector& v) const {
  check_input(x, alpha_bar);
  if (v.size() != dimension()) throw std::invalid_argument("subspace: cotangent dimension mismatch");
  // The Hessian of log p_t is the constant -Sigma_t^{-1}.
  return (v - (1.0 - alpha_bar) * apply_precision(v, alpha_bar)) / std::sqrt(alpha_bar);
}

double SubspacePrior::off_manifold_distance(const Vector& x, double alpha_bar) const {
  if (x.size() != dimension()) throw std::invalid_argument("subspace: state dimension mismatch");
  if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) throw std::domain_error("subspace: alpha_bar must lie in [0, 1]");
  const Vector d = x - std::sqrt(alpha_bar) * offset_;
  return (d - basis_ * (basis_.transpose() * d)).norm();
}

// ---------------------------------------------------------------------------

namespace {

double step_alpha_bar(const NoiseSchedule& schedule, const DiffusionState& state) {
  if (state.t < 1 || state.t > schedule.steps()) {
    throw std::out_of_range("prior: diffusion state step " + std::to_string(state.t) + " outside 1..T");
  }
  return schedule.alpha_bar(state.t);
}

}  // namespace

Vector score(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state) {
  return prior.score(state.x, step_alpha_bar(schedule, state));
}

Vector eps_hat(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state) {
  return prior.eps_hat(state.x, step_alpha_bar(schedule, state));
}

Vector x0_hat(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state) {
  return prior.x0_hat(state.x, step_alpha_bar(schedule, state));
}

Vector x0hat_vjp(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state, const Vector& v) {
  return prior.x0hat_vjp(state.x, step_alpha_bar(schedule, state), v);
}

}  // namespace dsg
