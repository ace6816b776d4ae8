// SPDX-License-Identifier: Apache-2.0
#include "dsg_lab/commands.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include <dsg/parallel.hpp>

#include "dsg_lab/output.hpp"
#include "dsg_lab/runner.hpp"

namespace dsg::lab {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kDefaultMc = 1'000'000;
constexpr std::size_t kSphereSampleCap = 100'000;
constexpr std::size_t kJensenDrawCap = 200'000;
constexpr std::size_t kDeviationDrawCap = 10'000;
constexpr int kSphereProblems = 100;

const std::vector<std::string> kSummaryKeys{"method", "steps", "g_r", "interval", "median_residual", "mean_mse",
                                            "psnr_analogue", "deviation_band_coverage", "diversity_trace",
                                            "trajectories", "seed"};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Maps exceptions onto exit codes, naming the problem on stderr.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailed;
  }
}

std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::string short_number(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream ss;
  ss << std::setprecision(4) << *v;
  return ss.str();
}

// Aligned plain-text table for the terminal.
void print_table(std::ostream& out, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      out << std::left << std::setw(static_cast<int>(width[c])) << cells[c] << (c + 1 < cells.size() ? "  " : "\n");
    }
  };
  line(header);
  for (const auto& row : rows) line(row);
}

struct Loaded {
  ExperimentConfig config;
  fs::path out_dir;
};

Loaded load(const CommonOptions& options) {
  if (!options.config) throw UsageError("--config is required");
  Loaded l{load_experiment(*options.config), {}};
  if (options.seed) l.config.seed = *options.seed;
  if (options.mc) l.config.trajectories = *options.mc;
  if (options.out) {
    l.out_dir = *options.out;
  } else if (l.config.output) {
    l.out_dir = *l.config.output;
  } else {
    l.out_dir = "dsg-out";
  }
  return l;
}

std::size_t record_count(const std::vector<Trajectory>& trajectories) {
  std::size_t n = 0;
  for (const Trajectory& t : trajectories) n += t.steps.size();
  return n;
}

void write_trajectories_checked(const fs::path& path, const std::vector<Trajectory>& trajectories) {
  write_trajectory_csv(path, trajectories);
  validate_trajectory_csv(path, record_count(trajectories));
}

void print_runs(std::ostream& out, const std::vector<MethodRun>& runs) {
  std::vector<std::vector<std::string>> rows;
  for (const MethodRun& r : runs) {
    rows.push_back({r.label, std::to_string(r.steps),
                    r.sampler.dps_step_size ? short_number(*r.sampler.dps_step_size) : "-",
                    short_number(r.summary.median_residual), short_number(r.summary.mean_mse),
                    short_number(r.summary.psnr_analogue), short_number(r.summary.deviation_band_coverage),
                    short_number(r.summary.diversity_trace)});
  }
  print_table(out, {"label", "steps", "step_size", "median_residual", "mean_mse", "psnr", "band_coverage", "diversity"},
              rows);
}

// ---------------------------------------------------------------------------
// verify

struct CheckResult {
  std::string name;
  bool passed = false;
  Json report;
  std::string detail;
};

CheckResult verify_sphere(std::uint64_t seed, std::size_t mc, unsigned jobs) {
  const std::size_t samples = std::min(mc, kSphereSampleCap);
  CheckResult res{"sphere", true, Json::object(), ""};
  Json per_n = Json::array();
  std::size_t total = 0, passed = 0;
  for (Eigen::Index n : {2, 8, 64}) {
    const std::uint64_t base = derive_seed(seed, static_cast<std::uint64_t>(n));
    std::vector<ClosedFormReport> reports(kSphereProblems);
    parallel_for(reports.size(), jobs, [&](std::size_t i) {
      const SphereProblem p = random_sphere_problem(n, derive_seed(base, 2 * i));
      reports[i] = verify_closed_form(p, samples, derive_seed(base, 2 * i + 1));
    });
    std::size_t ok = 0;
    double min_margin = std::numeric_limits<double>::infinity();
    double max_error = 0.0;
    for (const ClosedFormReport& r : reports) {
      if (r.passed) ++ok;
      min_margin = std::min(min_margin, r.best_sample_objective - r.closed_form_objective);
      max_error = std::max(max_error, std::abs(r.closed_form_objective - r.expected_objective));
    }
    Json j;
    j["n"] = n;
    j["problems"] = reports.size();
    j["passed"] = ok;
    j["samples_per_problem"] = samples;
    j["min_margin_over_samples"] = min_margin;
    j["max_objective_error"] = max_error;
    per_n.push_back(std::move(j));
    total += reports.size();
    passed += ok;
  }

  SphereProblem hand{Vector::Zero(2), std::sqrt(2.0), (Vector(2) << 3.0, 4.0).finished()};
  const ClosedFormReport hand_report = verify_closed_form(hand, samples, derive_seed(seed, 1000));
  SphereProblem flat{Vector::Zero(3), 1.0, Vector::Zero(3)};
  const ClosedFormReport flat_report = verify_closed_form(flat, std::min<std::size_t>(samples, 1000), seed);

  res.passed = passed == total && hand_report.passed && flat_report.passed;
  res.report["random_problems"] = std::move(per_n);
  Json hand_json = to_json(hand_report);
  hand_json["point"] = to_json(closed_form_sphere_min(hand));
  res.report["hand_example"] = std::move(hand_json);
  res.report["zero_gradient"] = to_json(flat_report);
  res.detail = std::to_string(passed) + "/" + std::to_string(total) + " random problems";
  return res;
}

CheckResult verify_concentration(std::uint64_t seed, std::size_t mc, unsigned jobs) {
  const auto reports = concentration_sweep(1000, 1.0, {0.005, 0.01, 0.02}, mc, derive_seed(seed, 2), jobs);
  CheckResult res{"concentration", true, Json::object(), ""};
  Json arr = Json::array();
  std::size_t ok = 0;
  for (const ConcentrationReport& r : reports) {
    if (r.passed) ++ok;
    arr.push_back(to_json(r));
  }
  res.passed = ok == reports.size();
  res.report["reports"] = std::move(arr);
  res.detail = std::to_string(ok) + "/" + std::to_string(reports.size()) + " epsilon values, mean ratio " +
               short_number(reports.front().mean_ratio);
  return res;
}

CheckResult verify_jensen(std::uint64_t seed, std::size_t mc, unsigned jobs) {
  const std::size_t draws = std::max<std::size_t>(2, std::min(mc, kJensenDrawCap));
  CheckResult res{"jensen", true, Json::object(), ""};
  Json arr = Json::array();
  std::size_t ok = 0, total = 0;
  std::uint64_t stream = 0;
  auto run = [&](const JensenFunction& f, const GaussianSpec& g) {
    const JensenGapReport r = jensen_gap_check(f, g, draws, derive_seed(seed, 300 + stream++), jobs);
    ++total;
    if (r.passed) ++ok;
    arr.push_back(to_json(r));
  };

  run(jensen_function("quadratic", 2.0), {Vector::Zero(3), (Vector(3) << 1.0, 2.0, 3.0).finished(), Vector()});
  run(jensen_function("quadratic", 1.0), {Vector::Zero(10), Vector::Ones(10), Vector()});
  for (Eigen::Index n : {10, 100, 1000}) {
    Rng rng = make_rng(seed, 400 + static_cast<std::uint64_t>(n));
    GaussianSpec g;
    g.mean = 0.5 * standard_normal_vector(rng, n);
    g.spectrum.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) g.spectrum[i] = 0.5 + static_cast<double>(i % 3) * 0.5;
    g.householder = standard_normal_vector(rng, n);
    for (const std::string& name : jensen_catalog()) run(jensen_function(name, 1.0), g);
  }
  res.passed = ok == total;
  res.report["draws"] = draws;
  res.report["reports"] = std::move(arr);
  res.detail = std::to_string(ok) + "/" + std::to_string(total) + " cases";
  return res;
}

CheckResult verify_deviation(std::uint64_t seed, std::size_t mc) {
  const std::size_t draws = std::min(mc, kDeviationDrawCap);
  const SubspacePrior prior = SubspacePrior::random(256, 8, 2.0, derive_seed(seed, 500));
  CheckResult res{"deviation", true, Json::object(), ""};
  Json arr = Json::array();
  std::size_t ok = 0, total = 0;
  for (double ab : {0.1, 0.5, 0.9}) {
    const DeviationReport r = deviation_check(prior, ab, draws, derive_seed(seed, 501 + total));
    ++total;
    if (r.passed) ++ok;
    arr.push_back(to_json(r));
  }
  res.passed = ok == total;
  res.report["reports"] = std::move(arr);
  res.detail = std::to_string(ok) + "/" + std::to_string(total) + " noise levels";
  return res;
}

// ---------------------------------------------------------------------------

std::vector<std::string> summary_table_header() {
  return {"label", "method", "steps", "g_r", "interval", "dps_step_size", "median_residual", "mean_mse",
          "psnr_analogue", "deviation_band_coverage", "diversity_trace", "trajectories", "seed"};
}

std::vector<std::string> summary_table_row(const MethodRun& r) {
  const SamplerConfig& s = r.sampler;
  return {r.label,
          std::string(to_string(s.method)),
          std::to_string(r.steps),
          s.method == Method::Dsg ? format_double(s.guidance_rate_or_default()) : "",
          std::to_string(s.interval),
          s.dps_step_size ? format_double(*s.dps_step_size) : "",
          cell(r.summary.median_residual),
          cell(r.summary.mean_mse),
          cell(r.summary.psnr_analogue),
          cell(r.summary.deviation_band_coverage),
          format_double(r.summary.diversity_trace),
          std::to_string(r.summary.trajectories),
          std::to_string(s.seed)};
}

std::string file_token(std::string label) {
  for (char& c : label) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  return label;
}

bool nonincreasing(const std::vector<std::optional<double>>& values) {
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] && values[i - 1] && *values[i] > *values[i - 1]) return false;
  }
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------

int cmd_verify(const CommonOptions& options, const std::string& which, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    static const std::vector<std::string> kChecks{"sphere", "concentration", "jensen", "deviation"};
    if (which != "all" && std::find(kChecks.begin(), kChecks.end(), which) == kChecks.end()) {
      throw UsageError("--which must be one of sphere, concentration, jensen, deviation, all (got '" + which + "')");
    }
    const std::uint64_t seed = options.seed.value_or(0);
    const std::size_t mc = options.mc.value_or(kDefaultMc);
    if (mc < 2) throw UsageError("--mc must be >= 2");
    const unsigned jobs = resolve_jobs(options.jobs);
    const fs::path dir = options.out.value_or("dsg-verify");

    std::vector<CheckResult> results;
    for (const std::string& name : kChecks) {
      if (which != "all" && which != name) continue;
      if (name == "sphere") results.push_back(verify_sphere(seed, mc, jobs));
      if (name == "concentration") results.push_back(verify_concentration(seed, mc, jobs));
      if (name == "jensen") results.push_back(verify_jensen(seed, mc, jobs));
      if (name == "deviation") results.push_back(verify_deviation(seed, mc));
    }

    bool all_passed = true;
    Json index;
    index["seed"] = seed;
    index["mc"] = mc;
    Json checks = Json::array();
    std::vector<std::vector<std::string>> rows;
    for (CheckResult& r : results) {
      Json report;
      report["check"] = r.name;
      report["passed"] = r.passed;
      report["seed"] = seed;
      report["mc"] = mc;
      report.update(r.report);
      const fs::path path = dir / ("verify_" + r.name + ".json");
      write_json(path, report);
      validate_json(path, {"check", "passed", "seed", "mc"});
      Json entry;
      entry["check"] = r.name;
      entry["passed"] = r.passed;
      entry["report"] = path.filename().string();
      checks.push_back(std::move(entry));
      rows.push_back({r.name, r.passed ? "PASS" : "FAIL", r.detail});
      if (!r.passed) {
        all_passed = false;
        err << "check failed: " << r.name << " (see " << path.string() << ")\n";
      }
    }
    index["checks"] = std::move(checks);
    index["passed"] = all_passed;
    const fs::path index_path = dir / "verify_summary.json";
    write_json(index_path, index);
    validate_json(index_path, {"seed", "mc", "checks", "passed"});
    print_table(out, {"check", "result", "detail"}, rows);
    return all_passed ? kExitOk : kExitFailed;
  });
}

int cmd_run(const CommonOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const Loaded l = load(options);
    const ExperimentConfig& c = l.config;
    const Instance inst = make_instance(c);
    const std::vector<MethodRun> runs = run_methods(c, inst, c.methods, {std::nullopt, resolve_jobs(options.jobs)});

    Json summary;
    summary["experiment"] = c.name;
    summary["seed"] = c.seed;
    summary["notes"] = metric_notes();
    summary["x_true"] = to_json(inst.x_true);
    Json results = Json::array();
    for (const MethodRun& r : runs) {
      const std::string token = file_token(r.label);
      write_trajectories_checked(l.out_dir / (token + ".csv"), r.trajectories);
      if (c.prior->dimension() == 2) {
        const fs::path svg = l.out_dir / (token + "_samples.svg");
        write_scatter_svg(svg, *c.prior, r.trajectories, r.label + ": final samples over prior density");
        validate_svg(svg);
      }
      results.push_back(summary_row(r));
    }
    summary["results"] = std::move(results);
    const fs::path path = l.out_dir / "summary.json";
    write_json(path, summary);
    const Json back = validate_json(path, {"experiment", "seed", "notes", "results"});
    for (const Json& row : back.at("results")) {
      for (const std::string& key : kSummaryKeys) {
        if (!row.contains(key)) throw std::runtime_error("summary row lacks '" + key + "'");
      }
    }
    print_runs(out, runs);
    return kExitOk;
  });
}

int cmd_ablate_steps(const CommonOptions& options, const std::vector<int>& steps, std::ostream& out,
                     std::ostream& err) {
  return guarded(err, [&]() -> int {
    const Loaded l = load(options);
    const ExperimentConfig& c = l.config;
    if (steps.empty()) throw UsageError("--steps needs at least one step count");
    for (int s : steps) {
      if (s < 1 || s > c.schedule.steps) {
        throw UsageError("step count " + std::to_string(s) + " outside 1.." + std::to_string(c.schedule.steps));
      }
    }
    for (const MethodEntry& m : c.methods) {
      if (!m.sampler.ddim_steps.empty()) {
        throw ConfigError("methods." + m.label + ".ddim_steps", "explicit step lists cannot be ablated");
      }
    }
    const Instance inst = make_instance(c);
    std::vector<MethodRun> all;
    for (int s : steps) {
      auto runs = run_methods(c, inst, c.methods, {s, resolve_jobs(options.jobs)});
      for (MethodRun& r : runs) all.push_back(std::move(r));
    }

    std::vector<std::vector<std::string>> rows;
    Json json_rows = Json::array();
    for (const MethodRun& r : all) {
      write_trajectories_checked(l.out_dir / (file_token(r.label) + "_steps" + std::to_string(r.steps) + ".csv"),
                                 r.trajectories);
      rows.push_back(summary_table_row(r));
      json_rows.push_back(summary_row(r));
    }
    // Median-residual inflation from the largest to the smallest step count.
    Json inflation = Json::object();
    const int most = *std::max_element(steps.begin(), steps.end());
    const int fewest = *std::min_element(steps.begin(), steps.end());
    for (const MethodEntry& m : c.methods) {
      std::optional<double> hi, lo;
      for (const MethodRun& r : all) {
        if (r.label != m.label) continue;
        if (r.steps == most) hi = r.summary.median_residual;
        if (r.steps == fewest) lo = r.summary.median_residual;
      }
      inflation[m.label] = hi && lo && *hi > 0.0 && std::isfinite(*lo / *hi) ? Json(*lo / *hi) : Json(nullptr);
    }

    const fs::path csv = l.out_dir / "ablate_steps.csv";
    write_table_csv(csv, summary_table_header(), rows);
    validate_table_csv(csv, summary_table_header(), rows.size());
    Json j;
    j["experiment"] = c.name;
    j["seed"] = c.seed;
    j["notes"] = metric_notes();
    j["step_counts"] = steps;
    j["rows"] = std::move(json_rows);
    j["inflation_fewest_over_most_steps"] = std::move(inflation);
    const fs::path path = l.out_dir / "ablate_steps.json";
    write_json(path, j);
    validate_json(path, {"experiment", "seed", "step_counts", "rows", "inflation_fewest_over_most_steps"});
    print_runs(out, all);
    return kExitOk;
  });
}

int cmd_sweep_gr(const CommonOptions& options, const std::vector<double>& rates, std::ostream& out,
                 std::ostream& err) {
  return guarded(err, [&]() -> int {
    const Loaded l = load(options);
    const ExperimentConfig& c = l.config;
    if (!c.op) throw ConfigError("operator", "sweep-gr needs a measurement operator");
    if (rates.empty()) throw UsageError("--gr needs at least one guidance rate");

    std::vector<double> unique;
    for (double g : rates) {
      if (!(g >= 0.0 && g <= 1.0)) throw UsageError("guidance rates must lie in [0, 1]");
      if (std::find(unique.begin(), unique.end(), g) != unique.end()) {
        err << "warning: duplicate guidance rate " << format_double(g) << " ignored\n";
        continue;
      }
      unique.push_back(g);
    }
    std::sort(unique.begin(), unique.end());

    MethodEntry base{"DSG", {}, false, 1.0};
    base.sampler.method = Method::Dsg;
    for (const MethodEntry& m : c.methods) {
      if (m.sampler.method == Method::Dsg) {
        base = m;
        break;
      }
    }
    std::vector<MethodEntry> entries;
    MethodEntry uncond{"UNCOND", {}, false, 1.0};
    entries.push_back(uncond);
    for (double g : unique) {
      MethodEntry e = base;
      e.sampler.guidance_rate = g;
      e.label = "DSG_gr" + format_double(g);
      entries.push_back(e);
    }
    const Instance inst = make_instance(c);
    const auto runs = run_methods(c, inst, entries, {std::nullopt, resolve_jobs(options.jobs)});

    std::vector<std::vector<std::string>> rows;
    Json json_rows = Json::array();
    std::vector<std::optional<double>> residuals, diversity;
    for (std::size_t i = 1; i < runs.size(); ++i) {
      const MethodRun& r = runs[i];
      write_trajectories_checked(l.out_dir / (file_token(r.label) + ".csv"), r.trajectories);
      rows.push_back(summary_table_row(r));
      json_rows.push_back(summary_row(r));
      residuals.push_back(r.summary.median_residual);
      diversity.push_back(r.summary.diversity_trace);
    }
    write_trajectories_checked(l.out_dir / "UNCOND.csv", runs.front().trajectories);

    const fs::path csv = l.out_dir / "sweep_gr.csv";
    write_table_csv(csv, summary_table_header(), rows);
    validate_table_csv(csv, summary_table_header(), rows.size());
    Json j;
    j["experiment"] = c.name;
    j["seed"] = c.seed;
    j["notes"] = metric_notes();
    j["guidance_rates"] = unique;
    j["rows"] = std::move(json_rows);
    j["uncond_reference"] = summary_row(runs.front());
    Json trends;
    trends["residual_nonincreasing_with_gr"] = nonincreasing(residuals);
    trends["diversity_nonincreasing_with_gr"] = nonincreasing(diversity);
    j["trends"] = std::move(trends);
    const fs::path path = l.out_dir / "sweep_gr.json";
    write_json(path, j);
    validate_json(path, {"experiment", "seed", "guidance_rates", "rows", "uncond_reference", "trends"});
    print_runs(out, runs);
    return kExitOk;
  });
}

}  // namespace dsg::lab
