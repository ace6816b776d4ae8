// SPDX-License-Identifier: Apache-2.0
#include "dsg/serialization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dsg {

ConfigError::ConfigError(std::string path, const std::string& message)
    : std::runtime_error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}

JsonReader::JsonReader(const Json& node, std::string path) : node_(node), path_(std::move(path)) {
  if (!node_.is_object()) throw ConfigError(path_, "expected an object");
}

std::string JsonReader::child_path(const std::string& key) const {
  return path_.empty() ? key : path_ + "." + key;
}

bool JsonReader::has(const std::string& key) const { return node_.contains(key) && !node_.at(key).is_null(); }

const Json& JsonReader::at(const std::string& key) const {
  if (!has(key)) fail(key, "missing required field");
  return node_.at(key);
}

void JsonReader::fail(const std::string& key, const std::string& message) const {
  throw ConfigError(child_path(key), message);
}

double JsonReader::number(const std::string& key) const {
  const Json& v = at(key);
  if (!v.is_number()) fail(key, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(key, "expected a finite number");
  return d;
}

double JsonReader::number_or(const std::string& key, double fallback) const {
  return has(key) ? number(key) : fallback;
}

std::int64_t JsonReader::integer(const std::string& key) const {
  const Json& v = at(key);
  if (v.is_number_integer()) return v.get<std::int64_t>();
  // Accept integral floats such as 1e6.
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9.007199254740992e15) {
      return static_cast<std::int64_t>(d);
    }
  }
  fail(key, "expected an integer");
}

std::int64_t JsonReader::integer_or(const std::string& key, std::int64_t fallback) const {
  return has(key) ? integer(key) : fallback;
}

std::uint64_t JsonReader::seed(const std::string& key) const {
  const Json& v = at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  fail(key, "expected a non-negative 64-bit integer");
}

std::uint64_t JsonReader::seed_or(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? seed(key) : fallback;
}

std::string JsonReader::string(const std::string& key) const {
  const Json& v = at(key);
  if (!v.is_string()) fail(key, "expected a string");
  return v.get<std::string>();
}

bool JsonReader::boolean_or(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const Json& v = at(key);
  if (!v.is_boolean()) fail(key, "expected a boolean");
  return v.get<bool>();
}

Vector JsonReader::vector(const std::string& key) const { return vector_from_json(at(key), child_path(key)); }

std::vector<int> JsonReader::int_list(const std::string& key) const {
  const Json& v = at(key);
  if (!v.is_array()) fail(key, "expected an array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number_integer()) {
      throw ConfigError(child_path(key) + "[" + std::to_string(i) + "]", "expected an integer");
    }
    const auto x = v[i].get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
      throw ConfigError(child_path(key) + "[" + std::to_string(i) + "]", "out of range");
    }
    out.push_back(static_cast<int>(x));
  }
  return out;
}

void JsonReader::only(std::initializer_list<const char*> allowed) const {
  for (const auto& item : node_.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
    if (!known) fail(item.key(), "unknown field");
  }
}

Vector vector_from_json(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(path + "[" + std::to_string(i) + "]", "expected a number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Json to_json(const Vector& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

namespace {

// Runs a module constructor and re-tags its validation errors with a path.
template <typename F>
auto tagged(const std::string& path, F&& make) {
  try {
    return make();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  } catch (const std::domain_error& e) {
    throw ConfigError(path, e.what());
  } catch (const std::out_of_range& e) {
    throw ConfigError(path, e.what());
  }
}

Eigen::Index positive_index(const JsonReader& r, const std::string& key) {
  const std::int64_t v = r.integer(key);
  if (v < 1) r.fail(key, "must be >= 1");
  return static_cast<Eigen::Index>(v);
}

Matrix row_major_matrix(const JsonReader& r, const std::string& key, Eigen::Index rows, Eigen::Index cols) {
  const Vector flat = r.vector(key);
  if (flat.size() != rows * cols) {
    r.fail(key, "expected " + std::to_string(rows * cols) + " entries (row-major " + std::to_string(rows) + " x " +
                    std::to_string(cols) + ")");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = flat[i * cols + c];
  }
  return m;
}

Json row_major(const Matrix& m) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(m(i, c));
  }
  return arr;
}

GridShape grid_from_json(const Json& j, const std::string& path) {
  const JsonReader r(j, path);
  if (r.has("len")) {
    r.only({"len"});
    return GridShape::line(positive_index(r, "len"));
  }
  r.only({"rows", "cols"});
  return GridShape::plane(positive_index(r, "rows"), positive_index(r, "cols"));
}

Json grid_to_json(const GridShape& g) {
  Json j;
  if (g.planar) {
    j["rows"] = g.rows;
    j["cols"] = g.cols;
  } else {
    j["len"] = g.cols;
  }
  return j;
}

int int_field(const JsonReader& r, const std::string& key) {
  const std::int64_t v = r.integer(key);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) r.fail(key, "out of range");
  return static_cast<int>(v);
}

}  // namespace

// ---------------------------------------------------------------------------

ScheduleSpec schedule_from_json(const Json& j, const std::string& path) {
  const JsonReader r(j, path);
  r.only({"T", "beta_min", "beta_max", "eta", "ddim_steps"});
  ScheduleSpec spec;
  spec.steps = r.has("T") ? int_field(r, "T") : spec.steps;
  spec.beta_min = r.number_or("beta_min", spec.beta_min);
  spec.beta_max = r.number_or("beta_max", spec.beta_max);
  spec.eta = r.number_or("eta", spec.eta);
  spec.ddim_steps = r.has("ddim_steps") ? int_field(r, "ddim_steps") : spec.ddim_steps;
  if (spec.steps < 1) r.fail("T", "must be >= 1");
  if (!(spec.beta_min > 0.0 && spec.beta_min < 1.0)) r.fail("beta_min", "must lie in (0, 1)");
  if (!(spec.beta_max >= spec.beta_min && spec.beta_max < 1.0)) r.fail("beta_max", "must lie in [beta_min, 1)");
  if (!(spec.eta >= 0.0 && spec.eta <= 1.0)) r.fail("eta", "must lie in [0, 1]");
  if (spec.ddim_steps < 0 || spec.ddim_steps > spec.steps) r.fail("ddim_steps", "must lie in 0..T");
  tagged(path, [&] { return spec.build(); });
  return spec;
}

Json to_json(const ScheduleSpec& spec) {
  Json j;
  j["T"] = spec.steps;
  j["beta_min"] = spec.beta_min;
  j["beta_max"] = spec.beta_max;
  j["eta"] = spec.eta;
  j["ddim_steps"] = spec.ddim_steps;
  return j;
}

// ---------------------------------------------------------------------------

std::shared_ptr<const Prior> prior_from_json(const Json& j, const std::string& path) {
  const JsonReader r(j, path);
  const std::string type = r.string("type");

  if (type == "gmm") {
    r.only({"type", "n", "weights", "means", "stds"});
    const Vector w = r.vector("weights");
    const Vector s = r.vector("stds");
    const Json& means_json = r.at("means");
    if (!means_json.is_array()) r.fail("means", "expected an array of vectors");
    std::vector<Vector> means;
    for (std::size_t k = 0; k < means_json.size(); ++k) {
      means.push_back(vector_from_json(means_json[k], r.child_path("means") + "[" + std::to_string(k) + "]"));
    }
    if (r.has("n") && !means.empty() && means.front().size() != r.integer("n")) {
      r.fail("n", "does not match the component means");
    }
    return tagged(path, [&] {
      return std::make_shared<const GaussianMixturePrior>(std::vector<double>(w.data(), w.data() + w.size()),
                                                          std::move(means),
                                                          std::vector<double>(s.data(), s.data() + s.size()));
    });
  }

  if (type == "gaussian") {
    r.only({"type", "n", "mean", "std"});
    Vector mean = r.has("mean") ? r.vector("mean") : Vector::Zero(positive_index(r, "n"));
    if (r.has("n") && mean.size() != r.integer("n")) r.fail("n", "does not match the mean");
    const double std = r.number_or("std", 1.0);
    return tagged(path, [&] {
      return std::make_shared<const GaussianMixturePrior>(GaussianMixturePrior::single(std::move(mean), std));
    });
  }

  if (type == "subspace") {
    r.only({"type", "n", "k", "latent_std", "basis_seed", "basis", "offset"});
    const Eigen::Index n = positive_index(r, "n");
    const Eigen::Index k = positive_index(r, "k");
    if (k > n) r.fail("k", "must be <= n");
    const double tau = r.number_or("latent_std", std::sqrt(static_cast<double>(n) / static_cast<double>(k)));
    if (!(tau > 0.0)) r.fail("latent_std", "must be > 0");
    Vector offset = r.has("offset") ? r.vector("offset") : Vector::Zero(n);
    if (offset.size() != n) r.fail("offset", "expected " + std::to_string(n) + " entries");
    if (r.has("basis")) {
      if (r.has("basis_seed")) r.fail("basis_seed", "give either basis or basis_seed");
      Matrix basis = row_major_matrix(r, "basis", n, k);
      return tagged(r.child_path("basis"), [&] {
        return std::make_shared<const SubspacePrior>(
            SubspacePrior::from_raw_basis(std::move(basis), tau, std::move(offset)));
      });
    }
    const std::uint64_t seed = r.seed_or("basis_seed", 0);
    return tagged(path, [&] {
      const SubspacePrior random = SubspacePrior::random(n, k, tau, seed);
      return std::make_shared<const SubspacePrior>(random.basis(), tau, std::move(offset));
    });
  }

  r.fail("type", "unknown prior type '" + type + "' (expected gmm, gaussian or subspace)");
}

Json prior_to_json(const Prior& prior) {
  Json j;
  if (const auto* gmm = dynamic_cast<const GaussianMixturePrior*>(&prior)) {
    j["type"] = "gmm";
    j["n"] = gmm->dimension();
    j["weights"] = gmm->weights();
    Json means = Json::array();
    for (const Vector& m : gmm->means()) means.push_back(to_json(m));
    j["means"] = std::move(means);
    j["stds"] = gmm->stds();
  } else if (const auto* sub = dynamic_cast<const SubspacePrior*>(&prior)) {
    j["type"] = "subspace";
    j["n"] = sub->dimension();
    j["k"] = sub->intrinsic_dimension();
    j["latent_std"] = sub->latent_std();
    j["basis"] = row_major(sub->basis());
    j["offset"] = to_json(sub->offset());
  } else {
    throw std::invalid_argument("serialization: unsupported prior");
  }
  return j;
}

// ---------------------------------------------------------------------------

std::shared_ptr<const LinearForwardOperator> operator_from_json(const Json& j, Eigen::Index n,
                                                                const std::string& path) {
  const JsonReader r(j, path);
  const std::string type = r.string("type");
  const double noise = r.number_or("noise_std", kDefaultMeasurementNoiseStd);
  if (!(noise >= 0.0)) r.fail("noise_std", "must be >= 0");

  auto grid_for = [&]() {
    const GridShape grid = r.has("grid") ? grid_from_json(r.at("grid"), r.child_path("grid")) : GridShape::line(n);
    if (grid.size() != n) r.fail("grid", "covers " + std::to_string(grid.size()) + " cells, prior has " +
                                             std::to_string(n));
    return grid;
  };

  if (type == "mask") {
    r.only({"type", "noise_std", "keep_fraction", "seed", "kept"});
    if (r.has("kept")) {
      if (r.has("keep_fraction")) r.fail("keep_fraction", "give either kept or keep_fraction");
      const std::vector<int> kept = r.int_list("kept");
      std::vector<Eigen::Index> idx(kept.begin(), kept.end());
      return tagged(r.child_path("kept"), [&] {
        return std::make_shared<const LinearForwardOperator>(make_mask_operator_from_indices(n, idx, noise));
      });
    }
    const double keep = r.number("keep_fraction");
    const std::uint64_t seed = r.seed_or("seed", 0);
    return tagged(r.child_path("keep_fraction"), [&] {
      return std::make_shared<const LinearForwardOperator>(make_mask_operator(n, keep, seed, noise));
    });
  }
  if (type == "downsample") {
    r.only({"type", "noise_std", "grid", "factor"});
    const GridShape grid = grid_for();
    const int factor = int_field(r, "factor");
    return tagged(r.child_path("factor"), [&] {
      return std::make_shared<const LinearForwardOperator>(make_downsample_operator(grid, factor, noise));
    });
  }
  if (type == "blur") {
    r.only({"type", "noise_std", "grid", "kernel_std", "kernel_size"});
    const GridShape grid = grid_for();
    const double kstd = r.number("kernel_std");
    const int ksize = int_field(r, "kernel_size");
    return tagged(path, [&] {
      return std::make_shared<const LinearForwardOperator>(make_blur_operator(grid, kstd, ksize, noise));
    });
  }
  if (type == "dense") {
    r.only({"type", "noise_std", "rows", "matrix"});
    const Eigen::Index rows = positive_index(r, "rows");
    Matrix m = row_major_matrix(r, "matrix", rows, n);
    return tagged(path, [&] {
      return std::make_shared<const LinearForwardOperator>(make_dense_operator(std::move(m), noise));
    });
  }
  r.fail("type", "unknown operator type '" + type + "' (expected mask, downsample, blur or dense)");
}

Json operator_to_json(const LinearForwardOperator& op) {
  Json j;
  switch (op.kind()) {
    case OperatorKind::Mask: {
      j["type"] = "mask";
      Json kept = Json::array();
      for (Eigen::Index i : op.kept_indices()) kept.push_back(i);
      j["kept"] = std::move(kept);
      break;
    }
    case OperatorKind::Downsample:
      j["type"] = "downsample";
      j["grid"] = grid_to_json(op.grid());
      j["factor"] = op.factor();
      break;
    case OperatorKind::Blur:
      j["type"] = "blur";
      j["grid"] = grid_to_json(op.grid());
      j["kernel_std"] = op.kernel_std();
      j["kernel_size"] = op.kernel_size();
      break;
    case OperatorKind::Dense:
      j["type"] = "dense";
      j["rows"] = op.output_dim();
      j["matrix"] = row_major(op.matrix());
      break;
  }
  j["noise_std"] = op.noise_std();
  return j;
}

Json to_json(const Measurement& m) {
  Json j;
  j["operator"] = operator_to_json(*m.op);
  j["seed"] = m.seed;
  j["y"] = to_json(m.y);
  return j;
}

// ---------------------------------------------------------------------------

SamplerConfig sampler_from_json(const Json& j, const std::string& path) {
  const JsonReader r(j, path);
  r.only({"method", "guidance_rate", "interval", "dps_step_size", "mc_samples", "mc_std_scale", "ddim_steps",
          "seed"});
  SamplerConfig c;
  c.method = tagged(r.child_path("method"), [&] { return parse_method(r.string("method")); });
  if (r.has("guidance_rate")) c.guidance_rate = r.number("guidance_rate");
  if (r.has("interval")) c.interval = int_field(r, "interval");
  if (r.has("dps_step_size")) c.dps_step_size = r.number("dps_step_size");
  if (r.has("mc_samples")) c.mc_samples = int_field(r, "mc_samples");
  if (r.has("mc_std_scale")) c.mc_std_scale = r.number("mc_std_scale");
  if (r.has("ddim_steps")) c.ddim_steps = r.int_list("ddim_steps");
  c.seed = r.seed_or("seed", 0);
  return c;
}

Json to_json(const SamplerConfig& c) {
  Json j;
  j["method"] = std::string(to_string(c.method));
  if (c.guidance_rate) j["guidance_rate"] = *c.guidance_rate;
  j["interval"] = c.interval;
  if (c.dps_step_size) j["dps_step_size"] = *c.dps_step_size;
  if (c.mc_samples) j["mc_samples"] = *c.mc_samples;
  if (c.mc_std_scale) j["mc_std_scale"] = *c.mc_std_scale;
  if (!c.ddim_steps.empty()) j["ddim_steps"] = c.ddim_steps;
  j["seed"] = c.seed;
  return j;
}

// ---------------------------------------------------------------------------

Json to_json(const ClosedFormReport& r) {
  Json j;
  j["n"] = r.n;
  j["radius"] = r.radius;
  j["gradient_norm"] = r.gradient_norm;
  j["closed_form_objective"] = r.closed_form_objective;
  j["expected_objective"] = r.expected_objective;
  j["best_sample_objective"] = r.best_sample_objective;
  j["samples"] = r.samples;
  j["degenerate"] = r.degenerate;
  j["attains_expected"] = r.attains_expected;
  j["dominates_samples"] = r.dominates_samples;
  j["passed"] = r.passed;
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

namespace {

Json tail_json(const TailEstimate& t) {
  Json j;
  j["threshold"] = t.threshold;
  j["count"] = t.count;
  j["probability"] = t.probability;
  j["half_width_99"] = t.half_width;
  j["passed"] = t.passed;
  return j;
}

}  // namespace

Json to_json(const ConcentrationReport& r) {
  Json j;
  j["n"] = r.n;
  j["sigma"] = r.sigma;
  j["epsilon"] = r.epsilon;
  j["x_lower"] = r.x_lower;
  j["x_upper"] = r.x_upper;
  j["bound"] = r.bound;
  j["mc_samples"] = r.mc_samples;
  j["tail_above_x_lower"] = tail_json(r.upper_tail);
  j["tail_below_x_upper"] = tail_json(r.lower_tail);
  j["mean_ratio"] = r.mean_ratio;
  j["mean_ratio_se"] = r.mean_ratio_se;
  j["mean_tolerance"] = r.mean_tolerance;
  j["mean_passed"] = r.mean_passed;
  j["vacuous"] = r.vacuous;
  j["passed"] = r.passed;
  return j;
}

Json to_json(const JensenGapReport& r) {
  Json j;
  j["function"] = r.function;
  j["beta"] = r.beta;
  j["n"] = r.n;
  j["trace"] = r.trace;
  j["estimate"] = r.estimate;
  j["standard_error"] = r.standard_error;
  j["lower_bound"] = r.lower_bound;
  j["exact"] = r.exact ? Json(*r.exact) : Json(nullptr);
  j["mc_samples"] = r.mc_samples;
  j["equality_case"] = r.equality_case;
  j["bound_holds"] = r.bound_holds;
  j["equality_holds"] = r.equality_holds;
  j["passed"] = r.passed;
  return j;
}

Json to_json(const DeviationReport& r) {
  Json j;
  j["n"] = r.n;
  j["k"] = r.k;
  j["alpha_bar"] = r.alpha_bar;
  j["samples"] = r.samples;
  j["mean_deviation"] = r.mean_deviation;
  j["radius"] = r.radius;
  j["relative_error"] = r.relative_error;
  j["tolerance"] = r.tolerance;
  j["passed"] = r.passed;
  return j;
}

Json to_json(const BandReport& r) {
  Json j;
  j["checked_steps"] = r.checked_steps;
  j["in_band"] = r.in_band;
  j["exits"] = r.exits;
  j["unresolved_steps"] = r.unresolved_steps;
  j["min_ratio"] = r.min_ratio;
  j["max_ratio"] = r.max_ratio;
  return j;
}

}  // namespace dsg
