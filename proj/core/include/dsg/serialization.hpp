// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "dsg/analysis.hpp"

namespace dsg {

using Json = nlohmann::ordered_json;

/// A schema or validation failure, tagged with the offending field path
/// (e.g. "methods[1].guidance_rate").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// Field access with path-tagged errors. Unknown keys are rejected so typos
// in config files surface instead of being ignored.
class JsonReader {
 public:
  JsonReader(const Json& node, std::string path);

  const Json& node() const { return node_; }
  const std::string& path() const { return path_; }
  std::string child_path(const std::string& key) const;

  bool has(const std::string& key) const;
  const Json& at(const std::string& key) const;

  double number(const std::string& key) const;
  double number_or(const std::string& key, double fallback) const;
  std::int64_t integer(const std::string& key) const;
  std::int64_t integer_or(const std::string& key, std::int64_t fallback) const;
  std::uint64_t seed(const std::string& key) const;
  std::uint64_t seed_or(const std::string& key, std::uint64_t fallback) const;
  std::string string(const std::string& key) const;
  bool boolean_or(const std::string& key, bool fallback) const;
  Vector vector(const std::string& key) const;
  std::vector<int> int_list(const std::string& key) const;

  /// Throws unless every key of the object is in `allowed`.
  void only(std::initializer_list<const char*> allowed) const;

  [[noreturn]] void fail(const std::string& key, const std::string& message) const;

 private:
  const Json& node_;
  std::string path_;
};

Vector vector_from_json(const Json& j, const std::string& path);
Json to_json(const Vector& v);

// Schedule: {T, beta_min, beta_max, eta, ddim_steps}
ScheduleSpec schedule_from_json(const Json& j, const std::string& path = "schedule");
Json to_json(const ScheduleSpec& spec);

// Priors:
//   {"type": "gmm", "weights": [...], "means": [[...], ...], "stds": [...]}
//   {"type": "gaussian", "mean": [...] | "n": N, "std": s}
//   {"type": "subspace", "n": N, "k": K, "latent_std": tau,
//    "basis_seed": s | "basis": [row-major n x k], "offset": [...]}
// A subspace latent_std defaults to sqrt(n / k) (unit per-coordinate
// variance); a given basis is re-orthonormalized on load.
std::shared_ptr<const Prior> prior_from_json(const Json& j, const std::string& path = "prior");
Json prior_to_json(const Prior& prior);

// Operators (n is the prior dimension):
//   {"type": "mask", "keep_fraction": f, "seed": s | "kept": [...]}
//   {"type": "downsample", "grid": {"rows", "cols"} | {"len"}, "factor": k}
//   {"type": "blur", "grid": ..., "kernel_std": s, "kernel_size": k}
//   {"type": "dense", "rows": m, "matrix": [row-major m x n]}
// all with optional "noise_std".
std::shared_ptr<const LinearForwardOperator> operator_from_json(const Json& j, Eigen::Index n,
                                                                const std::string& path = "operator");
Json operator_to_json(const LinearForwardOperator& op);

Json to_json(const Measurement& m);

// {"method", "guidance_rate", "interval", "dps_step_size", "mc_samples",
//  "mc_std_scale", "ddim_steps", "seed"}. Validation is left to the caller,
// which knows the schedule length.
SamplerConfig sampler_from_json(const Json& j, const std::string& path = "sampler");
Json to_json(const SamplerConfig& config);

Json to_json(const ClosedFormReport& r);
Json to_json(const ConcentrationReport& r);
Json to_json(const JensenGapReport& r);
Json to_json(const DeviationReport& r);
Json to_json(const BandReport& r);

}  // namespace dsg
