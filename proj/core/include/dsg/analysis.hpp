// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dsg/sampler.hpp"

namespace dsg {

// ---------------------------------------------------------------------------
// Linear objective on a sphere

/// minimize g^T (x' - center) subject to |x' - center| = radius.
struct SphereProblem {
  Vector center;
  double radius = 0.0;
  Vector gradient;
};

double sphere_objective(const SphereProblem& problem, const Vector& point);

/// center - radius g / |g|; the center itself when g = 0.
Vector closed_form_sphere_min(const SphereProblem& problem);

/// Random center and gradient (standard normal), radius uniform in [0.1, 5].
SphereProblem random_sphere_problem(Eigen::Index n, std::uint64_t seed);

struct SphereSearchResult {
  Vector point;
  double objective = 0.0;
};

/// Best of `samples` uniform points on the sphere.
SphereSearchResult sphere_bruteforce_min(const SphereProblem& problem, std::size_t samples, std::uint64_t seed);

struct ClosedFormReport {
  Eigen::Index n = 0;
  double radius = 0.0;
  double gradient_norm = 0.0;
  double closed_form_objective = 0.0;
  double expected_objective = 0.0;  // -r |g|
  double best_sample_objective = 0.0;
  std::size_t samples = 0;
  bool degenerate = false;
  bool attains_expected = false;
  bool dominates_samples = false;
  bool passed = false;
  std::string note;
};

inline constexpr double kDominanceSlack = 1e-9;

ClosedFormReport verify_closed_form(const SphereProblem& problem, std::size_t samples, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Norm concentration of an isotropic Gaussian

struct TailEstimate {
  double threshold = 0.0;
  std::size_t count = 0;
  double probability = 0.0;
  double half_width = 0.0;  // 99% binomial half-width at the bound
  bool passed = false;
};

struct ConcentrationReport {
  Eigen::Index n = 0;
  double sigma = 1.0;
  double epsilon = 0.0;
  // Names follow the usual statement of the bound: x_lower is the larger
  // threshold (upper tail), x_upper the smaller one (lower tail).
  double x_lower = 0.0;
  double x_upper = 0.0;
  double bound = 0.0;  // exp(-n eps)
  std::size_t mc_samples = 0;
  TailEstimate upper_tail;  // P(|x - mu|^2 >= x_lower)
  TailEstimate lower_tail;  // P(|x - mu|^2 <= x_upper)
  double mean_ratio = 0.0;  // mean of |x - mu|^2 / (n sigma^2)
  double mean_ratio_se = 0.0;
  double mean_tolerance = 0.01;  // max(0.01, 4 SE)
  bool mean_passed = false;
  bool vacuous = false;
  bool passed = false;
};

double concentration_x_lower(Eigen::Index n, double sigma, double epsilon);
double concentration_x_upper(Eigen::Index n, double sigma, double epsilon);

ConcentrationReport concentration_check(Eigen::Index n, double sigma, double epsilon, std::size_t mc_samples,
                                        std::uint64_t seed, unsigned jobs = 1);

/// One report per epsilon, all evaluated on the same draws.
std::vector<ConcentrationReport> concentration_sweep(Eigen::Index n, double sigma, const std::vector<double>& epsilons,
                                                     std::size_t mc_samples, std::uint64_t seed, unsigned jobs = 1);

// ---------------------------------------------------------------------------
// Jensen gap of strongly convex functions under a Gaussian

/// Catalog of test functions with certified strong convexity modulus beta:
///   "quadratic"            beta/2 |x|^2
///   "anisotropic_quadratic" 1/2 x^T D x, D = diag(beta (1 + i / n)), i = 0..n-1
///   "quadratic_logsumexp"  beta/2 |x|^2 + log sum_i exp(x_i)
struct JensenFunction {
  std::string name;
  double beta = 1.0;
};

/// Throws std::invalid_argument for names outside the catalog or beta <= 0.
JensenFunction jensen_function(std::string_view name, double beta);
const std::vector<std::string>& jensen_catalog();
double evaluate(const JensenFunction& f, const Vector& x);

/// x ~ N(mu, P diag(lambda) P^T) with P the Householder reflection
/// I - 2 v v^T / |v|^2.
struct GaussianSpec {
  Vector mean;
  Vector spectrum;
  Vector householder;  // zero vector means P = I
};

struct JensenGapReport {
  std::string function;
  double beta = 0.0;
  Eigen::Index n = 0;
  double trace = 0.0;
  double estimate = 0.0;
  double standard_error = 0.0;
  double lower_bound = 0.0;  // beta/2 sum_i lambda_i
  std::optional<double> exact;  // closed form for quadratics
  std::size_t mc_samples = 0;
  bool equality_case = false;
  bool bound_holds = false;
  bool equality_holds = true;
  bool passed = false;
};

JensenGapReport jensen_gap_check(const JensenFunction& f, const GaussianSpec& gaussian, std::size_t mc_samples,
                                 std::uint64_t seed, unsigned jobs = 1);

// ---------------------------------------------------------------------------
// Manifold deviation

/// |(I - U U^T)(x - sqrt(abar) c)|; abar in [0, 1].
double manifold_deviation(const SubspacePrior& prior, const Vector& x, double alpha_bar);
double manifold_deviation(const SubspacePrior& prior, const NoiseSchedule& schedule, const DiffusionState& state);

/// sqrt((1 - abar)(n - k)).
double intermediate_manifold_radius(Eigen::Index n, Eigen::Index k, double alpha_bar);

struct DeviationReport {
  Eigen::Index n = 0;
  Eigen::Index k = 0;
  double alpha_bar = 0.0;
  std::size_t samples = 0;
  double mean_deviation = 0.0;
  double radius = 0.0;
  double relative_error = 0.0;
  double tolerance = 0.01;
  bool passed = false;
};

/// Mean deviation of forward-noised samples against the shell radius.
DeviationReport deviation_check(const SubspacePrior& prior, double alpha_bar, std::size_t samples,
                                std::uint64_t seed, double tolerance = 0.01);

struct BandOptions {
  double tolerance = 0.25;       // relative half-width around the shell radius
  double max_alpha_bar = 0.9;    // only steps with abar_t <= this are checked
  double resolution = 0.01;      // rounding error allowed, relative to the band half-width
};

struct BandReport {
  std::size_t checked_steps = 0;
  std::size_t in_band = 0;
  std::size_t exits = 0;            // numerically resolved exits
  std::size_t unresolved_steps = 0; // |x_t| too large to resolve the deviation
  double min_ratio = 0.0;           // deviation / radius over checked steps
  double max_ratio = 0.0;
};

/// Checks the logged deviations of one trajectory against the shell. A step
/// counts as an exit only if the deviation is computed accurately enough,
/// i.e. n |x_t| eps_machine stays below `resolution` times the band half-width.
BandReport deviation_band(const Trajectory& trajectory, const SubspacePrior& prior, const NoiseSchedule& schedule,
                          const BandOptions& options = {});

// ---------------------------------------------------------------------------
// Exact posterior for Gaussian priors and linear measurements

struct GaussianPosterior {
  Vector mean;
  Matrix covariance_factor;  // covariance = F F^T
  Matrix covariance() const { return covariance_factor * covariance_factor.transpose(); }
};

/// Prior must be a single-component mixture or a SubspacePrior. With
/// sigma_y = 0 the measurement must be consistent with the prior support.
GaussianPosterior exact_linear_gaussian_posterior(const Prior& prior, const LinearForwardOperator& op,
                                                  const Vector& y);

// ---------------------------------------------------------------------------
// Batch summaries

struct TrajectorySummary {
  std::size_t trajectories = 0;
  std::optional<double> median_residual;
  std::optional<double> residual_q25;
  std::optional<double> residual_q75;
  std::optional<double> mean_mse;
  std::optional<double> psnr_analogue;  // 10 log10(peak^2 / mse), peak = max - min of x_true
  std::optional<double> deviation_band_coverage;
  double diversity_trace = 0.0;         // trace of the final-sample covariance
  Vector sample_mean;
  std::vector<double> final_residuals;
};

/// Linear-interpolated quantile of unsorted data, q in [0, 1]. NaN counts as +inf.
double quantile(std::vector<double> values, double q);
double median(std::vector<double> values);

TrajectorySummary trajectory_metrics(const std::vector<Trajectory>& trajectories, const Prior& prior,
                                     const NoiseSchedule& schedule, const Measurement* measurement,
                                     const Vector* x_true, const BandOptions& band = {});

}  // namespace dsg
