// SPDX-License-Identifier: Apache-2.0
#include "dsg_lab/experiment.hpp"

#include <fstream>
#include <set>

namespace dsg::lab {

namespace {

MethodEntry method_from_json(const Json& j, const std::string& path) {
  const JsonReader r(j, path);
  MethodEntry entry;
  Json sampler = j;
  if (r.has("label")) {
    entry.label = r.string("label");
    sampler.erase("label");
  }
  if (r.has("step_scale")) {
    entry.step_scale = r.number("step_scale");
    if (!(entry.step_scale > 0.0)) r.fail("step_scale", "must be > 0");
    sampler.erase("step_scale");
  }
  if (r.has("dps_step_size") && r.at("dps_step_size").is_string()) {
    if (r.string("dps_step_size") != "tuned") r.fail("dps_step_size", "expected a number or \"tuned\"");
    entry.tune_step = true;
    sampler.erase("dps_step_size");
  }
  if (r.has("seed")) r.fail("seed", "set the seed at the experiment level");
  entry.sampler = sampler_from_json(sampler, path);
  if (entry.label.empty()) entry.label = std::string(to_string(entry.sampler.method));
  if (entry.step_scale != 1.0 && !entry.tune_step) r.fail("step_scale", "only applies to a tuned dps_step_size");
  return entry;
}

}  // namespace

ExperimentConfig experiment_from_json(const Json& j) {
  const JsonReader r(j, "");
  r.only({"name", "prior", "schedule", "operator", "truth_seed", "measurement_seed", "methods", "tuning",
          "trajectories", "seed", "output"});
  ExperimentConfig c;
  if (r.has("name")) c.name = r.string("name");
  c.prior_json = r.at("prior");
  c.prior = prior_from_json(c.prior_json, "prior");
  if (r.has("schedule")) c.schedule = schedule_from_json(r.at("schedule"), "schedule");
  if (r.has("operator")) {
    c.operator_json = r.at("operator");
    c.op = operator_from_json(*c.operator_json, c.prior->dimension(), "operator");
  }
  c.truth_seed = r.seed_or("truth_seed", c.truth_seed);
  c.measurement_seed = r.seed_or("measurement_seed", c.measurement_seed);
  c.seed = r.seed_or("seed", c.seed);
  if (r.has("output")) c.output = r.string("output");

  const std::int64_t count = r.integer_or("trajectories", static_cast<std::int64_t>(c.trajectories));
  if (count < 1) r.fail("trajectories", "must be >= 1");
  c.trajectories = static_cast<std::size_t>(count);

  if (r.has("tuning")) {
    const JsonReader t(r.at("tuning"), "tuning");
    t.only({"grid", "trajectories", "seed"});
    if (t.has("grid")) {
      const Vector grid = t.vector("grid");
      if (grid.size() == 0) t.fail("grid", "must not be empty");
      for (Eigen::Index i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0)) t.fail("grid", "step sizes must be > 0");
      }
      c.tuning.grid.assign(grid.data(), grid.data() + grid.size());
    }
    const std::int64_t tn = t.integer_or("trajectories", static_cast<std::int64_t>(c.tuning.trajectories));
    if (tn < 1) t.fail("trajectories", "must be >= 1");
    c.tuning.trajectories = static_cast<std::size_t>(tn);
    c.tuning.seed = t.seed_or("seed", c.tuning.seed);
  }

  const Json& methods = r.at("methods");
  if (!methods.is_array() || methods.empty()) r.fail("methods", "expected a non-empty array");
  std::set<std::string> labels;
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const std::string path = "methods[" + std::to_string(i) + "]";
    MethodEntry entry = method_from_json(methods[i], path);
    if (!labels.insert(entry.label).second) throw ConfigError(path + ".label", "duplicate label '" + entry.label + "'");
    if (is_guided(entry.sampler.method) && !c.op) {
      throw ConfigError(path + ".method", std::string(to_string(entry.sampler.method)) +
                                              " needs a measurement; add an \"operator\" section");
    }
    // Validate with a placeholder step size when it will be tuned.
    SamplerConfig probe = entry.sampler;
    if (entry.tune_step) probe.dps_step_size = 1.0;
    try {
      probe.validate(c.schedule.steps);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path, e.what());
    }
    c.methods.push_back(std::move(entry));
  }
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path.string() + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("", "invalid JSON in '" + path.string() + "': " + e.what());
  }
  return experiment_from_json(j);
}

Instance make_instance(const ExperimentConfig& config) {
  Instance inst;
  inst.x_true = config.prior->sample_clean(1, config.truth_seed).front();
  if (config.op) inst.measurement = measure(config.op, inst.x_true, config.measurement_seed);
  return inst;
}

}  // namespace dsg::lab
