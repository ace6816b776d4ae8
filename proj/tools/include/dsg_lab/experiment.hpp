// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <dsg/serialization.hpp>

namespace dsg::lab {

/// One method under comparison. A step size of "tuned" is resolved by a grid
/// search with DPS on separate tuning trajectories, then multiplied by
/// step_scale.
struct MethodEntry {
  std::string label;
  SamplerConfig sampler;
  bool tune_step = false;
  double step_scale = 1.0;
};

struct TuningSpec {
  std::vector<double> grid{0.03, 0.1, 0.3, 1.0, 3.0};
  std::size_t trajectories = 50;
  std::uint64_t seed = 0x7475E5ULL;
};

struct ExperimentConfig {
  std::string name = "experiment";
  Json prior_json;
  std::shared_ptr<const Prior> prior;
  ScheduleSpec schedule;
  std::optional<Json> operator_json;
  std::shared_ptr<const LinearForwardOperator> op;
  std::uint64_t truth_seed = 1;
  std::uint64_t measurement_seed = 2;
  std::vector<MethodEntry> methods;
  TuningSpec tuning;
  std::size_t trajectories = 200;
  std::uint64_t seed = 0;
  std::optional<std::string> output;
};

/// Parses and validates; every error is a ConfigError naming the field.
ExperimentConfig experiment_from_json(const Json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Ground truth and its measurement, fixed by the config seeds.
struct Instance {
  Vector x_true;
  std::optional<Measurement> measurement;
};

Instance make_instance(const ExperimentConfig& config);

}  // namespace dsg::lab
