// SPDX-License-Identifier: Apache-2.0
#include "dsg/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "dsg/parallel.hpp"

namespace dsg {

namespace {

constexpr double kZ995 = 2.5758293035489004;  // two-sided 99% normal quantile
constexpr std::size_t kShardSize = std::size_t{1} << 14;

std::size_t shard_count(std::size_t total) { return (total + kShardSize - 1) / kShardSize; }

double binomial_half_width(double p, std::size_t n) {
  const double q = std::clamp(p, 0.0, 1.0);
  return kZ995 * std::sqrt(q * (1.0 - q) / static_cast<double>(n));
}

double log_sum_exp(const Vector& x) {
  const double m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

struct MeanAndError {
  double mean = 0.0;
  double standard_error = 0.0;
};

MeanAndError mean_and_error(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double var = values.size() > 1 ? ss / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

}  // namespace

// ---------------------------------------------------------------------------

double sphere_objective(const SphereProblem& problem, const Vector& point) {
  return problem.gradient.dot(point - problem.center);
}

Vector closed_form_sphere_min(const SphereProblem& problem) {
  if (problem.gradient.size() != problem.center.size()) throw std::invalid_argument("sphere: dimension mismatch");
  if (!(problem.radius >= 0.0)) throw std::invalid_argument("sphere: radius must be >= 0");
  const double gnorm = problem.gradient.norm();
  if (gnorm == 0.0) return problem.center;
  return problem.center - (problem.radius / gnorm) * problem.gradient;
}

SphereProblem random_sphere_problem(Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sphere: n must be >= 1");
  Rng rng(derive_seed(seed, 0));
  SphereProblem p;
  p.center = standard_normal_vector(rng, n);
  p.gradient = standard_normal_vector(rng, n);
  p.radius = 0.1 + 4.9 * uniform01(rng);
  return p;
}

SphereSearchResult sphere_bruteforce_min(const SphereProblem& problem, std::size_t samples, std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("sphere: samples must be >= 1");
  if (problem.gradient.size() != problem.center.size()) throw std::invalid_argument("sphere: dimension mismatch");
  if (problem.radius == 0.0) return {problem.center, 0.0};

  Rng rng(derive_seed(seed, 0));
  const Eigen::Index n = problem.center.size();
  Vector z(n);
  Vector best(n);
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < samples; ++i) {
    fill_standard_normal(rng, z);
    const double norm = z.norm();
    if (norm == 0.0) continue;
    const double s = problem.gradient.dot(z) / norm;
    if (s < best_score) {
      best_score = s;
      best = z / norm;
    }
  }
  Vector point = problem.center + problem.radius * best;
  const double objective = sphere_objective(problem, point);
  return {std::move(point), objective};
}

ClosedFormReport verify_closed_form(const SphereProblem& problem, std::size_t samples, std::uint64_t seed) {
  ClosedFormReport r;
  r.n = problem.center.size();
  r.radius = problem.radius;
  r.samples = samples;
  r.gradient_norm = problem.gradient.norm();
  const Vector x_star = closed_form_sphere_min(problem);
  r.closed_form_objective = sphere_objective(problem, x_star);
  r.expected_objective = -problem.radius * r.gradient_norm;
  r.best_sample_objective = sphere_bruteforce_min(problem, samples, seed).objective;

  const double tol = 1e-12 * std::max(1.0, problem.radius * r.gradient_norm);
  r.attains_expected = std::abs(r.closed_form_objective - r.expected_objective) <= tol;
  r.dominates_samples = r.closed_form_objective <= r.best_sample_objective + kDominanceSlack;
  r.degenerate = r.gradient_norm == 0.0 || problem.radius == 0.0;
  if (r.degenerate) r.note = "degenerate objective: every feasible point is optimal";
  r.passed = r.degenerate || (r.attains_expected && r.dominates_samples);
  return r;
}

// ---------------------------------------------------------------------------

double concentration_x_lower(Eigen::Index n, double sigma, double epsilon) {
  const double s2n = static_cast<double>(n) * sigma * sigma;
  return s2n + 2.0 * s2n * (std::sqrt(epsilon) + epsilon);
}

double concentration_x_upper(Eigen::Index n, double sigma, double epsilon) {
  const double s2n = static_cast<double>(n) * sigma * sigma;
  return s2n - 2.0 * s2n * std::sqrt(epsilon);
}

std::vector<ConcentrationReport> concentration_sweep(Eigen::Index n, double sigma, const std::vector<double>& epsilons,
                                                     std::size_t mc_samples, std::uint64_t seed, unsigned jobs) {
  if (n < 1) throw std::invalid_argument("concentration: n must be >= 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("concentration: sigma must be > 0");
  if (mc_samples < 1) throw std::invalid_argument("concentration: mc_samples must be >= 1");
  for (double eps : epsilons) {
    if (!(eps > 0.0)) throw std::invalid_argument("concentration: epsilon must be > 0");
  }

  std::vector<double> squared(mc_samples);
  parallel_for(shard_count(mc_samples), jobs, [&](std::size_t shard) {
    Rng rng = make_rng(seed, shard);
    Vector z(n);
    const std::size_t end = std::min(mc_samples, (shard + 1) * kShardSize);
    for (std::size_t i = shard * kShardSize; i < end; ++i) {
      fill_standard_normal(rng, z);
      squared[i] = sigma * sigma * z.squaredNorm();
    }
  });

  const double scale = static_cast<double>(n) * sigma * sigma;
  std::vector<double> ratios(mc_samples);
  std::transform(squared.begin(), squared.end(), ratios.begin(), [&](double s) { return s / scale; });
  const MeanAndError ratio = mean_and_error(ratios);

  std::vector<ConcentrationReport> out;
  for (double eps : epsilons) {
    ConcentrationReport r;
    r.n = n;
    r.sigma = sigma;
    r.epsilon = eps;
    r.x_lower = concentration_x_lower(n, sigma, eps);
    r.x_upper = concentration_x_upper(n, sigma, eps);
    r.bound = std::exp(-static_cast<double>(n) * eps);
    r.mc_samples = mc_samples;
    r.mean_ratio = ratio.mean;
    r.mean_ratio_se = ratio.standard_error;
    r.mean_tolerance = std::max(0.01, 4.0 * ratio.standard_error);

    r.upper_tail.threshold = r.x_lower;
    r.lower_tail.threshold = r.x_upper;
    for (double s : squared) {
      if (s >= r.x_lower) ++r.upper_tail.count;
      if (s <= r.x_upper) ++r.lower_tail.count;
    }
    r.vacuous = r.bound >= 1.0;
    for (TailEstimate* tail : {&r.upper_tail, &r.lower_tail}) {
      tail->probability = static_cast<double>(tail->count) / static_cast<double>(mc_samples);
      tail->half_width = binomial_half_width(r.bound, mc_samples);
      tail->passed = r.vacuous || tail->probability <= r.bound + tail->half_width;
    }
    r.mean_passed = std::abs(r.mean_ratio - 1.0) <= r.mean_tolerance;
    r.passed = r.upper_tail.passed && r.lower_tail.passed && r.mean_passed;
    out.push_back(r);
  }
  return out;
}

ConcentrationReport concentration_check(Eigen::Index n, double sigma, double epsilon, std::size_t mc_samples,
                                        std::uint64_t seed, unsigned jobs) {
  return concentration_sweep(n, sigma, {epsilon}, mc_samples, seed, jobs).front();
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& jensen_catalog() {
  static const std::vector<std::string> names{"quadratic", "anisotropic_quadratic", "quadratic_logsumexp"};
  return names;
}

JensenFunction jensen_function(std::string_view name, double beta) {
  const auto& names = jensen_catalog();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw std::invalid_argument("jensen: '" + std::string(name) +
                                "' is not a cataloged strongly convex function");
  }
  if (!(beta > 0.0)) throw std::invalid_argument("jensen: beta must be > 0");
  return {std::string(name), beta};
}

namespace {

Vector anisotropic_curvature(double beta, Eigen::Index n) {
  Vector d(n);
  for (Eigen::Index i = 0; i < n; ++i) d[i] = beta * (1.0 + static_cast<double>(i) / static_cast<double>(n));
  return d;
}

}  // namespace

double evaluate(const JensenFunction& f, const Vector& x) {
  if (f.name == "quadratic") return 0.5 * f.beta * x.squaredNorm();
  if (f.name == "anisotropic_quadratic") {
    return 0.5 * (anisotropic_curvature(f.beta, x.size()).array() * x.array().square()).sum();
  }
  if (f.name == "quadratic_logsumexp") return 0.5 * f.beta * x.squaredNorm() + log_sum_exp(x);
  throw std::invalid_argument("jensen: unknown function '" + f.name + "'");
}

JensenGapReport jensen_gap_check(const JensenFunction& f, const GaussianSpec& gaussian, std::size_t mc_samples,
                                 std::uint64_t seed, unsigned jobs) {
  const JensenFunction fn = jensen_function(f.name, f.beta);
  const Eigen::Index n = gaussian.mean.size();
  if (n < 1) throw std::invalid_argument("jensen: dimension must be >= 1");
  if (gaussian.spectrum.size() != n) throw std::invalid_argument("jensen: spectrum dimension mismatch");
  if (!(gaussian.spectrum.array() > 0.0).all()) throw std::invalid_argument("jensen: eigenvalues must be > 0");
  if (mc_samples < 2) throw std::invalid_argument("jensen: mc_samples must be >= 2");

  Vector w = Vector::Zero(n);
  if (gaussian.householder.size() != 0) {
    if (gaussian.householder.size() != n) throw std::invalid_argument("jensen: householder dimension mismatch");
    const double norm = gaussian.householder.norm();
    if (norm > 0.0) w = gaussian.householder / norm;
  }
  const Vector root = gaussian.spectrum.array().sqrt();
  const double f_mean = evaluate(fn, gaussian.mean);

  // Antithetic pairs: E[f(mu + d)] = E[(f(mu + d) + f(mu - d)) / 2].
  std::vector<double> gaps(mc_samples);
  parallel_for(shard_count(mc_samples), jobs, [&](std::size_t shard) {
    Rng rng = make_rng(seed, shard);
    Vector d(n);
    const std::size_t end = std::min(mc_samples, (shard + 1) * kShardSize);
    for (std::size_t i = shard * kShardSize; i < end; ++i) {
      fill_standard_normal(rng, d);
      d.array() *= root.array();
      d -= (2.0 * w.dot(d)) * w;
      gaps[i] = 0.5 * (evaluate(fn, gaussian.mean + d) + evaluate(fn, gaussian.mean - d)) - f_mean;
    }
  });
  const MeanAndError est = mean_and_error(gaps);

  JensenGapReport r;
  r.function = fn.name;
  r.beta = fn.beta;
  r.n = n;
  r.trace = gaussian.spectrum.sum();
  r.estimate = est.mean;
  r.standard_error = est.standard_error;
  r.lower_bound = 0.5 * fn.beta * r.trace;
  r.mc_samples = mc_samples;
  if (fn.name == "quadratic") {
    r.exact = r.lower_bound;
  } else if (fn.name == "anisotropic_quadratic") {
    // diag(P Lambda P) for P = I - 2 w w^T
    const double wlw = (w.array().square() * gaussian.spectrum.array()).sum();
    const Vector w2 = w.array().square();
    const Vector diag = gaussian.spectrum.array() * (1.0 - 4.0 * w2.array()) + 4.0 * wlw * w2.array();
    r.exact = 0.5 * anisotropic_curvature(fn.beta, n).dot(diag);
  }
  r.equality_case = fn.name == "quadratic";
  r.bound_holds = r.estimate + 3.0 * r.standard_error >= r.lower_bound;
  if (r.equality_case) r.equality_holds = std::abs(r.estimate - r.lower_bound) <= 3.0 * r.standard_error;
  r.passed = r.bound_holds && r.equality_holds;
  return r;
}

// ---------------------------------------------------------------------------

double manifold_deviation(const SubspacePrior& prior, const Vector& x, double alpha_bar) {
  return prior.off_manifold_distance(x, alpha_bar);
}

double manifold_deviation(const SubspacePrior& prior, const NoiseSchedule& schedule, const DiffusionState& state) {
  if (state.t < 0 || state.t > schedule.steps()) throw std::out_of_range("deviation: step outside 0..T");
  return prior.off_manifold_distance(state.x, schedule.alpha_bar(state.t));
}

double intermediate_manifold_radius(Eigen::Index n, Eigen::Index k, double alpha_bar) {
  if (k < 0 || k > n) throw std::invalid_argument("deviation: need 0 <= k <= n");
  if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) throw std::domain_error("deviation: alpha_bar must lie in [0, 1]");
  return std::sqrt((1.0 - alpha_bar) * static_cast<double>(n - k));
}

DeviationReport deviation_check(const SubspacePrior& prior, double alpha_bar, std::size_t samples,
                                std::uint64_t seed, double tolerance) {
  if (!(alpha_bar >= 0.0 && alpha_bar < 1.0)) throw std::domain_error("deviation: alpha_bar must lie in [0, 1)");
  if (prior.intrinsic_dimension() == prior.dimension()) {
    throw std::invalid_argument("deviation: subspace has no orthogonal complement");
  }
  DeviationReport r;
  r.n = prior.dimension();
  r.k = prior.intrinsic_dimension();
  r.alpha_bar = alpha_bar;
  r.samples = samples;
  r.tolerance = tolerance;
  r.radius = intermediate_manifold_radius(r.n, r.k, alpha_bar);

  const std::vector<Vector> clean = prior.sample_clean(samples, seed);
  Rng rng(derive_seed(seed, 1));
  Vector eps(r.n);
  double total = 0.0;
  for (const Vector& x0 : clean) {
    fill_standard_normal(rng, eps);
    const Vector x = std::sqrt(alpha_bar) * x0 + std::sqrt(1.0 - alpha_bar) * eps;
    total += prior.off_manifold_distance(x, alpha_bar);
  }
  r.mean_deviation = total / static_cast<double>(samples);
  r.relative_error = std::abs(r.mean_deviation - r.radius) / r.radius;
  r.passed = r.relative_error <= tolerance;
  return r;
}

BandReport deviation_band(const Trajectory& trajectory, const SubspacePrior& prior, const NoiseSchedule& schedule,
                          const BandOptions& options) {
  BandReport r;
  r.min_ratio = std::numeric_limits<double>::infinity();
  r.max_ratio = 0.0;
  const double eps = std::numeric_limits<double>::epsilon();
  const auto n = static_cast<double>(prior.dimension());
  for (const StepRecord& rec : trajectory.steps) {
    if (!rec.manifold_dev) continue;
    const double ab = schedule.alpha_bar(rec.t);
    if (ab > options.max_alpha_bar) continue;
    ++r.checked_steps;
    const double radius = intermediate_manifold_radius(prior.dimension(), prior.intrinsic_dimension(), ab);
    const double half = options.tolerance * radius;
    if (n * rec.state_norm * eps > options.resolution * half || !std::isfinite(*rec.manifold_dev)) {
      ++r.unresolved_steps;
      continue;
    }
    const double ratio = *rec.manifold_dev / radius;
    r.min_ratio = std::min(r.min_ratio, ratio);
    r.max_ratio = std::max(r.max_ratio, ratio);
    if (std::abs(*rec.manifold_dev - radius) <= half) {
      ++r.in_band;
    } else {
      ++r.exits;
    }
  }
  if (r.in_band + r.exits == 0) r.min_ratio = 0.0;
  return r;
}

// ---------------------------------------------------------------------------

GaussianPosterior exact_linear_gaussian_posterior(const Prior& prior, const LinearForwardOperator& op,
                                                  const Vector& y) {
  // Prior in latent form x0 = m + L z, z ~ N(0, I_d).
  Vector m;
  Matrix L;
  if (const auto* gmm = dynamic_cast<const GaussianMixturePrior*>(&prior)) {
    if (gmm->components() != 1) throw std::invalid_argument("posterior: mixture prior must have one component");
    m = gmm->means().front();
    L = gmm->stds().front() * Matrix::Identity(m.size(), m.size());
  } else if (const auto* sub = dynamic_cast<const SubspacePrior*>(&prior)) {
    m = sub->offset();
    L = sub->latent_std() * sub->basis();
  } else {
    throw std::invalid_argument("posterior: prior must be Gaussian (single component or subspace)");
  }
  if (op.input_dim() != m.size()) throw std::invalid_argument("posterior: operator does not match the prior");
  if (y.size() != op.output_dim()) throw std::invalid_argument("posterior: measurement dimension mismatch");

  const Matrix B = op.to_dense() * L;
  const Vector resid = y - op.apply(m);
  const Eigen::Index d = L.cols();
  const double s2 = op.noise_std() * op.noise_std();

  GaussianPosterior post;
  if (s2 > 0.0) {
    const Matrix precision = Matrix::Identity(d, d) + B.transpose() * B / s2;
    const Eigen::LLT<Matrix> llt(precision);
    if (llt.info() != Eigen::Success) throw std::runtime_error("posterior: precision not positive definite");
    const Vector z = llt.solve(B.transpose() * resid / s2);
    post.mean = m + L * z;
    // precision = R R^T  =>  covariance = L R^{-T} R^{-1} L^T
    const Matrix r_inv_t = llt.matrixU().solve(Matrix::Identity(d, d));
    post.covariance_factor = L * r_inv_t;
    return post;
  }

  // Noiseless: condition z ~ N(0, I) on B z = resid.
  const Eigen::JacobiSVD<Matrix> svd(B, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const double cutoff =
      sv.size() > 0 ? 1e-12 * sv.maxCoeff() * static_cast<double>(std::max(B.rows(), B.cols())) : 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > cutoff) ++rank;
  }
  Vector z = Vector::Zero(d);
  const Vector ut_r = svd.matrixU().transpose() * resid;
  for (Eigen::Index i = 0; i < rank; ++i) z += (ut_r[i] / sv[i]) * svd.matrixV().col(i);
  if ((B * z - resid).norm() > 1e-8 * std::max(1.0, resid.norm())) {
    throw std::invalid_argument("posterior: noiseless measurement is inconsistent with the prior support");
  }
  post.mean = m + L * z;
  post.covariance_factor = L * svd.matrixV().rightCols(d - rank);
  return post;
}

// ---------------------------------------------------------------------------

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: empty input");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q must lie in [0, 1]");
  // Diverged runs (NaN) rank above every finite value.
  for (double& v : values) {
    if (std::isnan(v)) v = std::numeric_limits<double>::infinity();
  }
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0 || values[lo] == values[hi]) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

TrajectorySummary trajectory_metrics(const std::vector<Trajectory>& trajectories, const Prior& prior,
                                     const NoiseSchedule& schedule, const Measurement* measurement,
                                     const Vector* x_true, const BandOptions& band) {
  if (trajectories.empty()) throw std::invalid_argument("metrics: no trajectories");
  const Eigen::Index n = prior.dimension();
  TrajectorySummary s;
  s.trajectories = trajectories.size();
  const auto count = static_cast<double>(trajectories.size());

  s.sample_mean = Vector::Zero(n);
  for (const Trajectory& tr : trajectories) {
    if (tr.x0.size() != n) throw std::invalid_argument("metrics: sample dimension mismatch");
    s.sample_mean += tr.x0;
  }
  s.sample_mean /= count;
  if (trajectories.size() > 1) {
    double ss = 0.0;
    for (const Trajectory& tr : trajectories) ss += (tr.x0 - s.sample_mean).squaredNorm();
    s.diversity_trace = ss / (count - 1.0);
  }

  if (measurement) {
    for (const Trajectory& tr : trajectories) {
      s.final_residuals.push_back((measurement->op->apply(tr.x0) - measurement->y).norm());
    }
    s.median_residual = median(s.final_residuals);
    s.residual_q25 = quantile(s.final_residuals, 0.25);
    s.residual_q75 = quantile(s.final_residuals, 0.75);
  }

  if (x_true) {
    if (x_true->size() != n) throw std::invalid_argument("metrics: ground truth dimension mismatch");
    double total = 0.0;
    for (const Trajectory& tr : trajectories) total += (tr.x0 - *x_true).squaredNorm() / static_cast<double>(n);
    s.mean_mse = total / count;
    const double peak = x_true->maxCoeff() - x_true->minCoeff();
    const double psnr = 10.0 * std::log10(peak * peak / *s.mean_mse);
    if (std::isfinite(psnr)) s.psnr_analogue = psnr;
  }

  if (const auto* sub = dynamic_cast<const SubspacePrior*>(&prior)) {
    std::size_t eligible = 0;
    std::size_t inside = 0;
    for (const Trajectory& tr : trajectories) {
      for (const StepRecord& rec : tr.steps) {
        if (!rec.manifold_dev) continue;
        const double ab = schedule.alpha_bar(rec.t);
        if (ab > band.max_alpha_bar) continue;
        ++eligible;
        const double radius = intermediate_manifold_radius(n, sub->intrinsic_dimension(), ab);
        if (std::abs(*rec.manifold_dev - radius) <= band.tolerance * radius) ++inside;
      }
    }
    if (eligible > 0) s.deviation_band_coverage = static_cast<double>(inside) / static_cast<double>(eligible);
  }
  return s;
}

}  // namespace dsg
