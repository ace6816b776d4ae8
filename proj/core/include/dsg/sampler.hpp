// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dsg/guidance.hpp"

namespace dsg {

enum class Method { Uncond, Dps, Lgd, Dsg, Pdsg };

std::string_view to_string(Method method);
/// Accepts "UNCOND", "DPS", "LGD", "DSG", "PDSG" (case-insensitive).
Method parse_method(std::string_view name);
bool is_guided(Method method);

inline constexpr double kDefaultGuidanceRate = 0.2;
inline constexpr int kDefaultMcSamples = 3;
inline constexpr double kDefaultMcStdScale = 0.5;

struct SamplerConfig {
  Method method = Method::Uncond;
  std::optional<double> guidance_rate;  // DSG
  int interval = 1;
  std::optional<double> dps_step_size;  // DPS, PDSG, LGD
  std::optional<int> mc_samples;        // LGD
  std::optional<double> mc_std_scale;   // LGD
  std::vector<int> ddim_steps;          // retained steps; empty = all
  std::uint64_t seed = 0;

  double guidance_rate_or_default() const { return guidance_rate.value_or(kDefaultGuidanceRate); }

  /// Throws std::invalid_argument on invalid values or missing required
  /// fields; returns warnings for fields the chosen method ignores.
  std::vector<std::string> validate(int schedule_steps) const;
};

/// The unconditional reverse-step Gaussian N(mean, sigma^2 I) at x_t.
struct ReverseStep {
  Vector x0_hat;
  Vector eps_hat;
  Vector mean;  // mu_theta(x_t)
  double sigma = 0.0;
  double alpha_bar = 0.0;
};

ReverseStep reverse_step(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state);

struct StepOutcome {
  DiffusionState next;
  Vector mean;
  Vector x0_hat;
  double sigma = 0.0;
  double loss = 0.0;       // L(x0_hat(x_t)) when guidance ran
  double grad_norm = 0.0;  // ||grad_{x_t} L|| when guidance ran
  bool guided = false;
  bool guidance_skipped = false;  // sphere radius was zero
};

/// DDIM update x_{t-1} = mean + sigma * noise.
StepOutcome uncond_step(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state,
                        const Vector& noise);

/// Unconditional step minus step_size * grad_{x_t} L(x0_hat(x_t)).
StepOutcome dps_step(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state,
                     const GuidanceLoss& loss, double step_size, const Vector& noise);

struct LgdParams {
  int mc_samples = kDefaultMcSamples;
  double mc_std_scale = kDefaultMcStdScale;
  double step_size = 1.0;
};

/// DPS with the gradient replaced by a reparameterized Monte Carlo average
/// over x0 ~ N(x0_hat, (c sqrt(1 - abar))^2 I); the perturbations depend only on seed.
StepOutcome lgd_step(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state,
                     const GuidanceLoss& loss, const LgdParams& params, const Vector& noise, std::uint64_t seed);

/// Minimizer of grad^T x' over the sphere |x' - mu| = sqrt(n) sigma:
/// mu - sqrt(n) sigma grad / |grad|. A zero gradient falls back to `fallback`
/// (normalized onto the sphere) or, if that is absent or zero too, to mu.
Vector dsg_core(const Vector& mu, double sigma, const Vector& grad, const Vector* fallback = nullptr);

struct GuidanceDirections {
  Vector d_star;    // -r grad / |grad|
  Vector d_sample;  // sigma * noise
  Vector d_m;       // d_sample + g_r (d_star - d_sample)
  double radius = 0.0;
};

GuidanceDirections dsg_directions(double sigma, const Vector& grad, const Vector& noise, double guidance_rate);

/// Mixes the steepest constrained direction with the sampling noise and
/// places the result on the sphere of radius sqrt(n) sigma around mu.
/// g_r = 1 reproduces dsg_core exactly and g_r = 0 follows the noise direction.
Vector dsg_update(const Vector& mu, double sigma, const Vector& grad, const Vector& noise, double guidance_rate);

StepOutcome dsg_step(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state,
                     const GuidanceLoss& loss, double guidance_rate, const Vector& noise);

/// Radial projection of the DPS proposal onto the sphere around mu.
Vector pdsg_update(const Vector& mu, double sigma, const Vector& grad, const Vector& noise, double step_size);

StepOutcome pdsg_step(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state,
                      const GuidanceLoss& loss, double step_size, const Vector& noise);

struct StepRecord {
  int t = 0;                            // schedule step of x_t
  std::optional<double> loss;           // L(x0_hat(x_t)), needs a measurement
  double grad_norm = 0.0;               // 0 on steps without guidance
  double step_norm = 0.0;               // |x_{t-1} - mu_theta(x_t)|
  std::optional<double> manifold_dev;   // subspace priors only
  std::optional<double> residual;       // |A x0_hat(x_t) - y|
  double state_norm = 0.0;              // |x_t|, not written to CSV
  bool guided = false;
};

struct Trajectory {
  Vector x0;
  std::vector<StepRecord> steps;
  int guided_steps = 0;
  int skipped_guidance_steps = 0;
};

/// Runs the reverse loop from x_T ~ N(0, I) over config.ddim_steps. Guidance
/// fires at positions p = 0, 1, ... (p = 0 is t = T) with p % interval == 0;
/// every other step is unconditional. A measurement is required for guided
/// methods; for UNCOND it only feeds the logged loss and residual.
/// Trajectory i draws from stream i of config.seed.
Trajectory sample_trajectory(const Prior& prior, const NoiseSchedule& schedule, const SamplerConfig& config,
                             const Measurement* measurement, std::uint64_t trajectory_index = 0);

/// Same, with an arbitrary guidance loss (measurement optional, used for residuals).
Trajectory sample_trajectory(const Prior& prior, const NoiseSchedule& schedule, const SamplerConfig& config,
                             const GuidanceLoss& loss, const Measurement* measurement,
                             std::uint64_t trajectory_index = 0);

/// Trajectories 0..count-1, computed on up to `jobs` threads; the output does
/// not depend on `jobs`.
std::vector<Trajectory> sample_trajectories(const Prior& prior, const NoiseSchedule& schedule,
                                            const SamplerConfig& config, const Measurement* measurement,
                                            std::size_t count, unsigned jobs = 1);

}  // namespace dsg
