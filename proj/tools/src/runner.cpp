// SPDX-License-Identifier: Apache-2.0
#include "dsg_lab/runner.hpp"

#include <cmath>
#include <limits>

namespace dsg::lab {

namespace {

Json optional_number(const std::optional<double>& v) {
  if (v && std::isfinite(*v)) return *v;
  return nullptr;
}

}  // namespace

TuningResult tune_dps_step(const Prior& prior, const NoiseSchedule& schedule, const std::vector<int>& ddim_steps,
                           const Measurement& measurement, const TuningSpec& tuning, unsigned jobs) {
  TuningResult result;
  result.grid = tuning.grid;
  double best = std::numeric_limits<double>::infinity();
  for (double gamma : tuning.grid) {
    SamplerConfig cfg;
    cfg.method = Method::Dps;
    cfg.dps_step_size = gamma;
    cfg.ddim_steps = ddim_steps;
    cfg.seed = tuning.seed;
    const auto trajs = sample_trajectories(prior, schedule, cfg, &measurement, tuning.trajectories, jobs);
    std::vector<double> residuals;
    for (const Trajectory& t : trajs) residuals.push_back((measurement.op->apply(t.x0) - measurement.y).norm());
    double med = median(residuals);
    if (!std::isfinite(med)) med = std::numeric_limits<double>::infinity();
    result.median_residuals.push_back(med);
    if (med < best) {
      best = med;
      result.step_size = gamma;
    }
  }
  if (result.step_size == 0.0) result.step_size = tuning.grid.front();
  return result;
}

std::vector<MethodRun> run_methods(const ExperimentConfig& config, const Instance& instance,
                                   const std::vector<MethodEntry>& methods, const RunOptions& options) {
  ScheduleSpec spec = config.schedule;
  if (options.ddim_steps) spec.ddim_steps = *options.ddim_steps;
  const NoiseSchedule schedule = spec.build();
  const std::vector<int> retained = spec.retained_steps();
  const Measurement* measurement = instance.measurement ? &*instance.measurement : nullptr;

  std::optional<TuningResult> tuned;
  std::vector<MethodRun> runs;
  for (const MethodEntry& entry : methods) {
    MethodRun run;
    run.label = entry.label;
    run.sampler = entry.sampler;
    run.sampler.seed = config.seed;
    if (run.sampler.ddim_steps.empty()) run.sampler.ddim_steps = retained;
    run.steps = static_cast<int>(run.sampler.ddim_steps.size());
    if (entry.tune_step) {
      if (!measurement) throw ConfigError("operator", "step-size tuning needs a measurement");
      if (!tuned) tuned = tune_dps_step(*config.prior, schedule, retained, *measurement, config.tuning, options.jobs);
      run.tuning = tuned;
      run.sampler.dps_step_size = tuned->step_size * entry.step_scale;
    }
    run.trajectories =
        sample_trajectories(*config.prior, schedule, run.sampler, measurement, config.trajectories, options.jobs);
    run.summary = trajectory_metrics(run.trajectories, *config.prior, schedule, measurement, &instance.x_true);
    runs.push_back(std::move(run));
  }
  return runs;
}

Json summary_row(const MethodRun& run) {
  const SamplerConfig& s = run.sampler;
  Json j;
  j["method"] = std::string(to_string(s.method));
  j["label"] = run.label;
  j["steps"] = run.steps;
  j["g_r"] = s.method == Method::Dsg ? Json(s.guidance_rate_or_default()) : Json(nullptr);
  j["interval"] = s.interval;
  j["dps_step_size"] = s.dps_step_size ? Json(*s.dps_step_size) : Json(nullptr);
  j["median_residual"] = optional_number(run.summary.median_residual);
  j["residual_q25"] = optional_number(run.summary.residual_q25);
  j["residual_q75"] = optional_number(run.summary.residual_q75);
  j["mean_mse"] = optional_number(run.summary.mean_mse);
  j["psnr_analogue"] = optional_number(run.summary.psnr_analogue);
  j["deviation_band_coverage"] = optional_number(run.summary.deviation_band_coverage);
  j["diversity_trace"] = optional_number(run.summary.diversity_trace);
  j["sample_mean"] = to_json(run.summary.sample_mean);
  j["trajectories"] = run.summary.trajectories;
  j["seed"] = s.seed;
  if (run.tuning) {
    Json t;
    t["grid"] = run.tuning->grid;
    Json med = Json::array();
    for (double m : run.tuning->median_residuals) med.push_back(std::isfinite(m) ? Json(m) : Json(nullptr));
    t["median_residuals"] = std::move(med);
    t["selected"] = run.tuning->step_size;
    j["tuning"] = std::move(t);
  }
  return j;
}

Json metric_notes() {
  Json j;
  j["median_residual"] = "median over trajectories of |A x0 - y| for the final sample (alignment)";
  j["mean_mse"] = "mean over trajectories of |x0 - x_true|^2 / n (stands in for LPIPS/SSIM)";
  j["psnr_analogue"] = "10 log10(peak^2 / mean_mse) with peak = max(x_true) - min(x_true) (stands in for PSNR)";
  j["deviation_band_coverage"] =
      "fraction of steps with abar_t <= 0.9 whose off-manifold distance lies within 25% of "
      "sqrt((1 - abar_t)(n - k)); subspace priors only";
  j["diversity_trace"] = "trace of the final-sample covariance (stands in for FID-style diversity)";
  return j;
}

}  // namespace dsg::lab
