// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "dsg_lab/experiment.hpp"

namespace dsg::lab {

struct TuningResult {
  double step_size = 0.0;
  std::vector<double> grid;
  std::vector<double> median_residuals;  // one per grid point, +inf if diverged
};

/// Grid search for the DPS step size minimizing the median final
/// measurement residual; ties go to the smaller step.
TuningResult tune_dps_step(const Prior& prior, const NoiseSchedule& schedule, const std::vector<int>& ddim_steps,
                           const Measurement& measurement, const TuningSpec& tuning, unsigned jobs);

struct MethodRun {
  std::string label;
  SamplerConfig sampler;  // fully resolved
  int steps = 0;          // retained sampling steps
  std::optional<TuningResult> tuning;
  std::vector<Trajectory> trajectories;
  TrajectorySummary summary;
};

struct RunOptions {
  std::optional<int> ddim_steps;  // overrides the schedule's retained step count
  unsigned jobs = 1;
};

/// Runs every configured method on the same trajectory seeds.
std::vector<MethodRun> run_methods(const ExperimentConfig& config, const Instance& instance,
                                   const std::vector<MethodEntry>& methods, const RunOptions& options);

/// The summary row written to JSON: method, steps, g_r, interval, metrics,
/// trajectories, seed (plus label and step size).
Json summary_row(const MethodRun& run);

/// How each reported metric maps onto the image-quality columns it replaces.
Json metric_notes();

}  // namespace dsg::lab
