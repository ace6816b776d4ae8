// SPDX-License-Identifier: Apache-2.0
#include "dsg/sampler.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "dsg/parallel.hpp"

namespace dsg {

namespace {

void check_noise(const DiffusionState& state, const Vector& noise) {
  if (noise.size() != state.x.size()) throw std::invalid_argument("sampler: noise dimension mismatch");
}

double sphere_radius(Eigen::Index n, double sigma) { return std::sqrt(static_cast<double>(n)) * sigma; }

// Point at distance `radius` from mu along `direction`, or mu if the direction vanishes.
Vector on_sphere(const Vector& mu, double radius, const Vector& direction) {
  const double norm = direction.norm();
  if (norm == 0.0) return mu;
  return mu + (radius / norm) * direction;
}

StepOutcome start_outcome(const ReverseStep& rs, const DiffusionState& state) {
  StepOutcome out;
  out.next.t = state.t - 1;
  out.mean = rs.mean;
  out.x0_hat = rs.x0_hat;
  out.sigma = rs.sigma;
  return out;
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Uncond: return "UNCOND";
    case Method::Dps: return "DPS";
    case Method::Lgd: return "LGD";
    case Method::Dsg: return "DSG";
    case Method::Pdsg: return "PDSG";
  }
  return "UNCOND";
}

Method parse_method(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  for (Method m : {Method::Uncond, Method::Dps, Method::Lgd, Method::Dsg, Method::Pdsg}) {
    if (upper == to_string(m)) return m;
  }
  throw std::invalid_argument("sampler: unknown method '" + std::string(name) + "'");
}

bool is_guided(Method method) { return method != Method::Uncond; }

std::vector<std::string> SamplerConfig::validate(int schedule_steps) const {
  std::vector<std::string> warnings;
  if (guidance_rate && !(*guidance_rate >= 0.0 && *guidance_rate <= 1.0)) {
    throw std::invalid_argument("sampler: guidance_rate must lie in [0, 1]");
  }
  if (interval < 1) throw std::invalid_argument("sampler: interval must be >= 1");
  if (dps_step_size && !(*dps_step_size > 0.0)) throw std::invalid_argument("sampler: dps_step_size must be > 0");
  if (mc_samples && *mc_samples < 1) throw std::invalid_argument("sampler: mc_samples must be >= 1");
  if (mc_std_scale && !(*mc_std_scale > 0.0)) throw std::invalid_argument("sampler: mc_std_scale must be > 0");

  int previous = 0;
  for (int t : ddim_steps) {
    if (t <= previous || t > schedule_steps) {
      throw std::invalid_argument("sampler: ddim_steps must be strictly increasing within 1..T");
    }
    previous = t;
  }
  if (!ddim_steps.empty() && ddim_steps.back() != schedule_steps) {
    throw std::invalid_argument("sampler: ddim_steps must end at T");
  }

  const bool uses_step = method == Method::Dps || method == Method::Pdsg || method == Method::Lgd;
  if (uses_step && !dps_step_size) {
    throw std::invalid_argument("sampler: method " + std::string(to_string(method)) + " requires dps_step_size");
  }
  const auto name = std::string(to_string(method));
  if (guidance_rate && method != Method::Dsg) warnings.push_back("guidance_rate is ignored by " + name);
  if (dps_step_size && !uses_step) warnings.push_back("dps_step_size is ignored by " + name);
  if ((mc_samples || mc_std_scale) && method != Method::Lgd) {
    warnings.push_back("mc_samples/mc_std_scale are ignored by " + name);
  }
  if (interval != 1 && method == Method::Uncond) warnings.push_back("interval is ignored by UNCOND");
  return warnings;
}

ReverseStep reverse_step(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state) {
  if (state.t < 1 || state.t > schedule.steps()) throw std::out_of_range("sampler: step outside 1..T");
  if (state.x.size() != prior.dimension()) throw std::invalid_argument("sampler: state/prior dimension mismatch");
  ReverseStep rs;
  rs.alpha_bar = schedule.alpha_bar(state.t);
  const DdimCoefficients c = schedule.ddim_coeffs(state.t);
  const Vector s = prior.score(state.x, rs.alpha_bar);
  rs.eps_hat = -std::sqrt(1.0 - rs.alpha_bar) * s;
  rs.x0_hat = (state.x + (1.0 - rs.alpha_bar) * s) / std::sqrt(rs.alpha_bar);
  rs.mean = c.coef_x0 * rs.x0_hat + c.coef_eps * rs.eps_hat;
  rs.sigma = c.sigma;
  return rs;
}

StepOutcome uncond_step(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state,
                        const Vector& noise) {
  check_noise(state, noise);
  const ReverseStep rs = reverse_step(prior, schedule, state);
  StepOutcome out = start_outcome(rs, state);
  out.next.x = rs.mean + rs.sigma * noise;
  return out;
}

StepOutcome dps_step(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state,
                     const GuidanceLoss& loss, double step_size, const Vector& noise) {
  check_noise(state, noise);
  if (!(step_size >= 0.0)) throw std::invalid_argument("dps: step size must be >= 0");
  const ReverseStep rs = reverse_step(prior, schedule, state);
  StepOutcome out = start_outcome(rs, state);
  const GuidanceGradient g = guidance_grad_at(prior, loss, state.x, rs.alpha_bar, rs.x0_hat);
  out.next.x = rs.mean + rs.sigma * noise - step_size * g.grad;
  out.loss = g.loss;
  out.grad_norm = g.grad.norm();
  out.guided = true;
  return out;
}

StepOutcome lgd_step(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state,
                     const GuidanceLoss& loss, const LgdParams& params, const Vector& noise, std::uint64_t seed) {
  check_noise(state, noise);
  if (params.mc_samples < 1) throw std::invalid_argument("lgd: mc_samples must be >= 1");
  if (!(params.mc_std_scale > 0.0)) throw std::invalid_argument("lgd: mc_std_scale must be > 0");
  if (!(params.step_size >= 0.0)) throw std::invalid_argument("lgd: step size must be >= 0");
  const ReverseStep rs = reverse_step(prior, schedule, state);
  StepOutcome out = start_outcome(rs, state);

  const double spread = params.mc_std_scale * std::sqrt(1.0 - rs.alpha_bar);
  Rng rng(derive_seed(seed, 0));
  Vector grad_x0 = Vector::Zero(rs.x0_hat.size());
  double loss_sum = 0.0;
  Vector perturbed(rs.x0_hat.size());
  for (int j = 0; j < params.mc_samples; ++j) {
    fill_standard_normal(rng, perturbed);
    perturbed = rs.x0_hat + spread * perturbed;
    grad_x0 += loss.grad_x0(perturbed);
    loss_sum += loss.value(perturbed);
  }
  grad_x0 /= params.mc_samples;
  // The vjp is linear in its cotangent, so averaging before it is exact.
  const Vector grad = prior.x0hat_vjp(state.x, rs.alpha_bar, grad_x0);
  out.next.x = rs.mean + rs.sigma * noise - params.step_size * grad;
  out.loss = loss_sum / params.mc_samples;
  out.grad_norm = grad.norm();
  out.guided = true;
  return out;
}

Vector dsg_core(const Vector& mu, double sigma, const Vector& grad, const Vector* fallback) {
  if (grad.size() != mu.size()) throw std::invalid_argument("dsg: gradient dimension mismatch");
  if (!(sigma >= 0.0)) throw std::invalid_argument("dsg: sigma must be >= 0");
  const double radius = sphere_radius(mu.size(), sigma);
  const double gnorm = grad.norm();
  if (gnorm == 0.0) {
    if (fallback == nullptr) return mu;
    if (fallback->size() != mu.size()) throw std::invalid_argument("dsg: fallback dimension mismatch");
    return on_sphere(mu, radius, *fallback);
  }
  return mu - (radius / gnorm) * grad;
}

GuidanceDirections dsg_directions(double sigma, const Vector& grad, const Vector& noise, double guidance_rate) {
  if (grad.size() != noise.size()) throw std::invalid_argument("dsg: gradient/noise dimension mismatch");
  GuidanceDirections d;
  d.radius = sphere_radius(grad.size(), sigma);
  const double gnorm = grad.norm();
  d.d_sample = sigma * noise;
  d.d_star = gnorm == 0.0 ? Vector(d.d_sample) : Vector(-(d.radius / gnorm) * grad);
  d.d_m = d.d_sample + guidance_rate * (d.d_star - d.d_sample);
  return d;
}

Vector dsg_update(const Vector& mu, double sigma, const Vector& grad, const Vector& noise, double guidance_rate) {
  if (grad.size() != mu.size() || noise.size() != mu.size()) {
    throw std::invalid_argument("dsg: dimension mismatch");
  }
  if (!(guidance_rate >= 0.0 && guidance_rate <= 1.0)) throw std::invalid_argument("dsg: g_r must lie in [0, 1]");
  if (!(sigma >= 0.0)) throw std::invalid_argument("dsg: sigma must be >= 0");
  if (sigma == 0.0) return mu;
  const double radius = sphere_radius(mu.size(), sigma);
  const double gnorm = grad.norm();
  if (guidance_rate == 1.0) return dsg_core(mu, sigma, grad, &noise);
  if (guidance_rate == 0.0 || gnorm == 0.0) return on_sphere(mu, radius, noise);

  // d_m = (1 - g_r) sigma noise + g_r d_star
  const Vector d_m = ((1.0 - guidance_rate) * sigma) * noise - (guidance_rate * radius / gnorm) * grad;
  const double dm_norm = d_m.norm();
  // Exactly antipodal mix: fall back to the raw sampling direction.
  if (dm_norm == 0.0) return on_sphere(mu, radius, noise);
  return mu + (radius / dm_norm) * d_m;
}

StepOutcome dsg_step(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state,
                     const GuidanceLoss& loss, double guidance_rate, const Vector& noise) {
  check_noise(state, noise);
  const ReverseStep rs = reverse_step(prior, schedule, state);
  StepOutcome out = start_outcome(rs, state);
  if (rs.sigma == 0.0) {
    out.next.x = rs.mean;
    out.loss = loss.value(rs.x0_hat);
    out.guidance_skipped = true;
    return out;
  }
  const GuidanceGradient g = guidance_grad_at(prior, loss, state.x, rs.alpha_bar, rs.x0_hat);
  out.next.x = dsg_update(rs.mean, rs.sigma, g.grad, noise, guidance_rate);
  out.loss = g.loss;
  out.grad_norm = g.grad.norm();
  out.guided = true;
  return out;
}

Vector pdsg_update(const Vector& mu, double sigma, const Vector& grad, const Vector& noise, double step_size) {
  if (grad.size() != mu.size() || noise.size() != mu.size()) {
    throw std::invalid_argument("pdsg: dimension mismatch");
  }
  if (!(sigma >= 0.0)) throw std::invalid_argument("pdsg: sigma must be >= 0");
  if (sigma == 0.0) return mu;
  const double radius = sphere_radius(mu.size(), sigma);
  // d_p = x_dps - mu
  const Vector d_p = sigma * noise - step_size * grad;
  if (d_p.norm() == 0.0) return on_sphere(mu, radius, noise);
  return on_sphere(mu, radius, d_p);
}

StepOutcome pdsg_step(const Prior& prior, const NoiseSchedule& schedule, const DiffusionState& state,
                      const GuidanceLoss& loss, double step_size, const Vector& noise) {
  check_noise(state, noise);
  if (!(step_size >= 0.0)) throw std::invalid_argument("pdsg: step size must be >= 0");
  const ReverseStep rs = reverse_step(prior, schedule, state);
  StepOutcome out = start_outcome(rs, state);
  if (rs.sigma == 0.0) {
    out.next.x = rs.mean;
    out.loss = loss.value(rs.x0_hat);
    out.guidance_skipped = true;
    return out;
  }
  const GuidanceGradient g = guidance_grad_at(prior, loss, state.x, rs.alpha_bar, rs.x0_hat);
  out.next.x = pdsg_update(rs.mean, rs.sigma, g.grad, noise, step_size);
  out.loss = g.loss;
  out.grad_norm = g.grad.norm();
  out.guided = true;
  return out;
}

Trajectory sample_trajectory(const Prior& prior, const NoiseSchedule& schedule, const SamplerConfig& config,
                             const Measurement* measurement, std::uint64_t trajectory_index) {
  if (measurement == nullptr) {
    if (is_guided(config.method)) {
      throw std::invalid_argument("sampler: method " + std::string(to_string(config.method)) +
                                  " requires a measurement");
    }
    struct NoLoss final : GuidanceLoss {
      double value(const Vector&) const override { return 0.0; }
      Vector grad_x0(const Vector& x0) const override { return Vector::Zero(x0.size()); }
    };
    return sample_trajectory(prior, schedule, config, NoLoss{}, nullptr, trajectory_index);
  }
  const QuadraticGuidanceLoss loss(*measurement);
  return sample_trajectory(prior, schedule, config, loss, measurement, trajectory_index);
}

Trajectory sample_trajectory(const Prior& prior, const NoiseSchedule& schedule, const SamplerConfig& config,
                             const GuidanceLoss& loss, const Measurement* measurement,
                             std::uint64_t trajectory_index) {
  config.validate(schedule.steps());
  const NoiseSchedule steps = config.ddim_steps.empty() ? schedule : schedule.restrict_to(config.ddim_steps);
  const Eigen::Index n = prior.dimension();
  if (measurement && measurement->op->input_dim() != n) {
    throw std::invalid_argument("sampler: measurement operator does not match the prior dimension");
  }
  const auto* subspace = dynamic_cast<const SubspacePrior*>(&prior);
  const bool has_loss = measurement != nullptr || is_guided(config.method);

  Rng rng = make_rng(config.seed, trajectory_index);
  const std::uint64_t lgd_base = derive_seed(derive_seed(config.seed, trajectory_index), 0x4C4744ULL);
  const LgdParams lgd{config.mc_samples.value_or(kDefaultMcSamples),
                      config.mc_std_scale.value_or(kDefaultMcStdScale), config.dps_step_size.value_or(0.0)};
  const double step_size = config.dps_step_size.value_or(0.0);
  const double guidance_rate = config.guidance_rate_or_default();

  Trajectory traj;
  traj.steps.reserve(static_cast<std::size_t>(steps.steps()));
  DiffusionState state{standard_normal_vector(rng, n), steps.steps()};
  Vector noise(n);

  for (int position = 0; state.t >= 1; ++position) {
    fill_standard_normal(rng, noise);
    const bool guide = is_guided(config.method) && position % config.interval == 0;

    StepRecord rec;
    rec.t = steps.label(state.t);
    rec.guided = guide;
    rec.state_norm = state.x.norm();
    if (subspace) rec.manifold_dev = subspace->off_manifold_distance(state.x, steps.alpha_bar(state.t));

    StepOutcome out;
    if (!guide) {
      out = uncond_step(prior, steps, state, noise);
      if (has_loss) out.loss = loss.value(out.x0_hat);
    } else {
      switch (config.method) {
        case Method::Dps: out = dps_step(prior, steps, state, loss, step_size, noise); break;
        case Method::Lgd:
          out = lgd_step(prior, steps, state, loss, lgd, noise, derive_seed(lgd_base, static_cast<std::uint64_t>(rec.t)));
          break;
        case Method::Dsg: out = dsg_step(prior, steps, state, loss, guidance_rate, noise); break;
        case Method::Pdsg: out = pdsg_step(prior, steps, state, loss, step_size, noise); break;
        case Method::Uncond: break;
      }
      ++traj.guided_steps;
      if (out.guidance_skipped) ++traj.skipped_guidance_steps;
    }

    if (has_loss) rec.loss = out.loss;
    if (measurement) rec.residual = (measurement->op->apply(out.x0_hat) - measurement->y).norm();
    rec.grad_norm = out.grad_norm;
    rec.step_norm = (out.next.x - out.mean).norm();
    traj.steps.push_back(rec);
    state = std::move(out.next);
  }
  traj.x0 = std::move(state.x);
  return traj;
}

std::vector<Trajectory> sample_trajectories(const Prior& prior, const NoiseSchedule& schedule,
                                            const SamplerConfig& config, const Measurement* measurement,
                                            std::size_t count, unsigned jobs) {
  std::vector<Trajectory> out(count);
  parallel_for(count, jobs, [&](std::size_t i) {
    out[i] = sample_trajectory(prior, schedule, config, measurement, static_cast<std::uint64_t>(i));
  });
  return out;
}

}  // namespace dsg
