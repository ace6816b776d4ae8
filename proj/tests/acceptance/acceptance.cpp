// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 125).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <dsg/analysis.hpp>
#include <dsg/parallel.hpp>
#include <dsg/serialization.hpp>

#include "dsg_lab/commands.hpp"
#include "dsg_lab/runner.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace dsg;
using namespace dsg::lab;

namespace {

// ---------------------------------------------------------------------------
// Pinned tolerances and budgets

constexpr std::size_t kSphereProblems = 100;
constexpr std::size_t kSphereSamples = 100000;
constexpr double kSphereObjectiveTol = 1e-12;
constexpr double kSphereRuntimeBudget = 30.0;  // seconds

constexpr std::size_t kConstraintSteps = 1000;
constexpr double kConstraintRelTol = 1e-9;

constexpr std::size_t kConcentrationDraws = 1000000;
constexpr double kConcentrationMeanTol = 0.01;
constexpr double kConcentrationRuntimeBudget = 60.0;

constexpr std::size_t kJensenDraws = 200000;
constexpr double kJensenSeMultiple = 3.0;

constexpr std::size_t kGradientTriples = 100;
constexpr double kGradientRelTol = 1e-5;

constexpr std::size_t kBootstrapResamples = 2000;
constexpr double kBootstrapFraction = 0.90;

constexpr double kBandTolerance = 0.25;
constexpr double kBandMaxAlphaBar = 0.9;
constexpr double kDpsBandStepScale = 10.0;

constexpr double kOverheadRatio = 1.05;
constexpr int kTimingRounds = 15;
constexpr std::size_t kTimingTrajectories = 100;

constexpr std::uint64_t kSeed = 20240531;

// The inpainting instance shared by the ordering, robustness, band and
// overhead criteria.
constexpr const char* kInpaintingConfig = R"({
  "name": "acceptance-inpainting",
  "prior": {"type": "subspace", "n": 256, "k": 8, "basis_seed": 11},
  "schedule": {"T": 1000, "beta_min": 0.0001, "beta_max": 0.02, "eta": 1.0, "ddim_steps": 100},
  "operator": {"type": "mask", "keep_fraction": 0.08, "seed": 12, "noise_std": 0.05},
  "truth_seed": 13,
  "measurement_seed": 14,
  "trajectories": 200,
  "seed": 2024,
  "tuning": {"grid": [0.03, 0.1, 0.3, 1.0, 3.0], "trajectories": 50, "seed": 99},
  "methods": [
    {"method": "UNCOND"},
    {"method": "DPS", "dps_step_size": "tuned"},
    {"method": "DSG", "guidance_rate": 0.2, "interval": 1},
    {"method": "PDSG", "dps_step_size": "tuned", "step_scale": 10}
  ]
})";

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream ss;
  ss.precision(precision);
  ss << v;
  return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

unsigned g_jobs = 1;
volatile double g_sink = 0.0;  // keeps timed work observable

// ---------------------------------------------------------------------------
// Shared inpainting runs, computed once

struct Inpainting {
  ExperimentConfig config;
  Instance instance;
  NoiseSchedule schedule = NoiseSchedule::linear(1, 0.1, 0.1);
  const SubspacePrior* prior = nullptr;
};

const Inpainting& inpainting() {
  static const Inpainting data = [] {
    Inpainting d;
    d.config = experiment_from_json(Json::parse(kInpaintingConfig));
    d.instance = make_instance(d.config);
    d.schedule = d.config.schedule.build();
    d.prior = dynamic_cast<const SubspacePrior*>(d.config.prior.get());
    return d;
  }();
  return data;
}

const MethodRun& find_run(const std::vector<MethodRun>& runs, const std::string& label) {
  for (const MethodRun& r : runs) {
    if (r.label == label) return r;
  }
  throw std::runtime_error("no run labelled " + label);
}

const std::vector<MethodRun>& runs_at(int steps) {
  static std::map<int, std::vector<MethodRun>> cache;
  auto it = cache.find(steps);
  if (it == cache.end()) {
    const Inpainting& d = inpainting();
    it = cache.emplace(steps, run_methods(d.config, d.instance, d.config.methods, {steps, g_jobs})).first;
  }
  return it->second;
}

double median_of(const MethodRun& r) { return r.summary.median_residual.value(); }

// ---------------------------------------------------------------------------

Outcome criterion_closed_form() {
  const auto start = std::chrono::steady_clock::now();
  std::vector<ClosedFormReport> reports(3 * kSphereProblems);
  const std::vector<Eigen::Index> dims{2, 8, 64};
  parallel_for(reports.size(), g_jobs, [&](std::size_t i) {
    const Eigen::Index n = dims[i / kSphereProblems];
    const auto problem = random_sphere_problem(n, derive_seed(kSeed, i));
    reports[i] = verify_closed_form(problem, kSphereSamples, derive_seed(kSeed + 1, i));
  });
  const double elapsed = seconds_since(start);
  std::size_t failures = 0;
  double worst_gap = 0.0;
  double worst_margin = -std::numeric_limits<double>::infinity();
  for (const auto& r : reports) {
    const double scale = std::max(1.0, r.radius * r.gradient_norm);
    const double gap = std::abs(r.closed_form_objective - r.expected_objective) / scale;
    worst_gap = std::max(worst_gap, gap);
    worst_margin = std::max(worst_margin, r.closed_form_objective - r.best_sample_objective);
    const bool ok = r.closed_form_objective <= r.best_sample_objective + kDominanceSlack &&
                    gap <= kSphereObjectiveTol;
    if (!ok) ++failures;
  }
  return {failures == 0 && elapsed <= kSphereRuntimeBudget,
          std::to_string(reports.size()) + " problems, " + std::to_string(failures) +
              " failures, max |f* + r|g||/scale = " + fmt(worst_gap) + ", max f* - best sample = " +
              fmt(worst_margin) + ", " + fmt(elapsed, 3) + " s (budget " + fmt(kSphereRuntimeBudget) + " s)"};
}

Outcome criterion_sphere_constraint() {
  const Inpainting& d = inpainting();
  const QuadraticGuidanceLoss loss(*d.instance.measurement);
  Rng rng = make_rng(kSeed, 2);
  const Eigen::Index n = d.prior->dimension();
  double worst = 0.0;
  std::size_t checked = 0;
  bool endpoints = true;
  for (std::size_t i = 0; i < kConstraintSteps; ++i) {
    // t >= 2 keeps sigma_t > 0 under eta = 1.
    const int t = 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(d.schedule.steps() - 1));
    const double ab = d.schedule.alpha_bar(t);
    const Vector x0 = d.prior->sample_clean(1, rng()).front();
    const Vector x = std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * standard_normal_vector(rng, n);
    const Vector noise = standard_normal_vector(rng, n);
    const DiffusionState state{x, t};
    const double rate = uniform01(rng);
    const double step = std::pow(10.0, 4.0 * uniform01(rng) - 2.0);

    for (const StepOutcome& out : {dsg_step(*d.prior, d.schedule, state, loss, rate, noise),
                                   pdsg_step(*d.prior, d.schedule, state, loss, step, noise)}) {
      const double r = std::sqrt(static_cast<double>(n)) * out.sigma;
      worst = std::max(worst, std::abs((out.next.x - out.mean).norm() - r) / r);
      ++checked;
    }

    if (i % 10 == 0) {
      const ReverseStep rs = reverse_step(*d.prior, d.schedule, state);
      const GuidanceGradient g = guidance_grad(*d.prior, loss, d.schedule, state);
      const Vector full = dsg_step(*d.prior, d.schedule, state, loss, 1.0, noise).next.x;
      endpoints = endpoints && full == dsg_core(rs.mean, rs.sigma, g.grad);
      const Vector none = dsg_step(*d.prior, d.schedule, state, loss, 0.0, noise).next.x;
      const double radius = std::sqrt(static_cast<double>(n)) * rs.sigma;
      endpoints = endpoints && none == Vector(rs.mean + (radius / noise.norm()) * noise);
    }
  }
  return {worst <= kConstraintRelTol && endpoints,
          std::to_string(checked) + " steps, max relative radius error " + fmt(worst) + " (tol " +
              fmt(kConstraintRelTol) + "), endpoint identities " + (endpoints ? "exact" : "BROKEN")};
}

Outcome criterion_concentration() {
  const auto start = std::chrono::steady_clock::now();
  const auto reports = concentration_sweep(1000, 1.0, {0.005, 0.01, 0.02}, kConcentrationDraws, kSeed, g_jobs);
  const double elapsed = seconds_since(start);
  bool ok = elapsed <= kConcentrationRuntimeBudget;
  std::string detail;
  for (const auto& r : reports) {
    const bool tails = r.upper_tail.probability <= r.bound + r.upper_tail.half_width &&
                       r.lower_tail.probability <= r.bound + r.lower_tail.half_width;
    ok = ok && tails;
    detail += "eps=" + fmt(r.epsilon) + ": tails " + fmt(r.upper_tail.probability) + "/" +
              fmt(r.lower_tail.probability) + " vs " + fmt(r.bound) + "+" + fmt(r.upper_tail.half_width) + "; ";
  }
  const double mean = reports.front().mean_ratio;
  ok = ok && std::abs(mean - 1.0) <= kConcentrationMeanTol;
  detail += "mean ratio " + fmt(mean, 6) + ", " + fmt(elapsed, 3) + " s (budget " +
            fmt(kConcentrationRuntimeBudget) + " s)";
  return {ok, detail};
}

Outcome criterion_jensen() {
  bool ok = true;
  std::string detail;
  {
    Vector spectrum(3);
    spectrum << 1.0, 2.0, 3.0;
    const auto r = jensen_gap_check(jensen_function("quadratic", 2.0), GaussianSpec{Vector::Zero(3), spectrum, {}},
                                    kJensenDraws, kSeed, g_jobs);
    const bool eq = std::abs(r.estimate - 6.0) <= kJensenSeMultiple * r.standard_error;
    ok = ok && eq && r.lower_bound == 6.0;
    detail += "diag(1,2,3): " + fmt(r.estimate, 6) + " vs 6; ";
  }
  {
    const auto r = jensen_gap_check(jensen_function("quadratic", 1.0),
                                    GaussianSpec{Vector::Zero(10), Vector::Ones(10), {}}, kJensenDraws, kSeed + 1,
                                    g_jobs);
    const bool eq = std::abs(r.estimate - 5.0) <= kJensenSeMultiple * r.standard_error;
    ok = ok && eq && r.lower_bound == 5.0;
    detail += "I10: " + fmt(r.estimate, 6) + " vs 5; ";
  }
  std::size_t cases = 0;
  std::uint64_t stream = 10;
  for (const std::string& name : jensen_catalog()) {
    std::vector<double> per_n;
    for (Eigen::Index n : {10, 100, 1000}) {
      Vector spectrum(n);
      for (Eigen::Index i = 0; i < n; ++i) spectrum[i] = 0.5 + 0.5 * static_cast<double>(i % 3);
      Rng rng = make_rng(kSeed, stream++);
      const GaussianSpec g{standard_normal_vector(rng, n), spectrum, standard_normal_vector(rng, n)};
      const auto r = jensen_gap_check(jensen_function(name, 1.0), g, kJensenDraws, derive_seed(kSeed, stream), g_jobs);
      ok = ok && r.estimate + kJensenSeMultiple * r.standard_error >= r.lower_bound;
      per_n.push_back(r.estimate / static_cast<double>(n));
      ++cases;
    }
    detail += name + " gap/n " + fmt(per_n[0], 3) + "," + fmt(per_n[1], 3) + "," + fmt(per_n[2], 3) + "; ";
  }
  detail += std::to_string(cases) + " inequality cases";
  return {ok, detail};
}

// Random (prior, operator, state) triple for the gradient criterion.
struct GradientCase {
  std::shared_ptr<const Prior> prior;
  std::shared_ptr<const LinearForwardOperator> op;
  Vector y;
  Vector x;
  double alpha_bar = 0.5;
};

GradientCase make_gradient_case(std::size_t i, const NoiseSchedule& schedule) {
  Rng rng = make_rng(kSeed, 1000 + i);
  GradientCase c;
  const Eigen::Index n = 2 * (2 + static_cast<Eigen::Index>(rng() % 7));  // even, 4..16
  if (i % 2 == 0) {
    const std::size_t k = 1 + rng() % 4;
    std::vector<double> w(k), s(k);
    std::vector<Vector> means;
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      w[j] = 0.2 + uniform01(rng);
      total += w[j];
      s[j] = 0.3 + 0.9 * uniform01(rng);
      means.push_back(2.0 * standard_normal_vector(rng, n));
    }
    for (double& v : w) v /= total;
    c.prior = std::make_shared<const GaussianMixturePrior>(w, means, s);
  } else {
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n - 1));
    auto sub = SubspacePrior::random(n, k, 0.5 + 2.0 * uniform01(rng), rng());
    c.prior = std::make_shared<const SubspacePrior>(sub.basis(), sub.latent_std(), standard_normal_vector(rng, n));
  }
  switch ((i / 2) % 4) {
    case 0: c.op = std::make_shared<const LinearForwardOperator>(make_mask_operator(n, 0.5, rng())); break;
    case 1: c.op = std::make_shared<const LinearForwardOperator>(make_downsample_operator(GridShape::line(n), 2)); break;
    case 2: c.op = std::make_shared<const LinearForwardOperator>(make_blur_operator(GridShape::line(n), 1.0, 3)); break;
    default: {
      Matrix A(3, n);
      for (Eigen::Index j = 0; j < n; ++j) A.col(j) = standard_normal_vector(rng, 3);
      c.op = std::make_shared<const LinearForwardOperator>(make_dense_operator(A));
    }
  }
  const int t = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(schedule.steps()));
  c.alpha_bar = schedule.alpha_bar(t);
  const Vector x0 = c.prior->sample_clean(1, rng()).front();
  c.y = c.op->apply(c.prior->sample_clean(1, rng()).front()) + 0.05 * standard_normal_vector(rng, c.op->output_dim());
  c.x = std::sqrt(c.alpha_bar) * x0 + std::sqrt(1.0 - c.alpha_bar) * standard_normal_vector(rng, n);
  return c;
}

Outcome criterion_gradients() {
  const auto schedule = NoiseSchedule::linear(1000, 1e-4, 0.02);
  double worst_grad = 0.0;
  double worst_vjp = 0.0;
  for (std::size_t i = 0; i < kGradientTriples; ++i) {
    const GradientCase c = make_gradient_case(i, schedule);
    const QuadraticGuidanceLoss loss(Measurement{c.y, c.op, 0});
    const GuidanceGradient g = guidance_grad_at(*c.prior, loss, c.x, c.alpha_bar, c.prior->x0_hat(c.x, c.alpha_bar));
    const double h = 1e-5 * (1.0 + c.x.cwiseAbs().maxCoeff());
    const auto f = [&](const Vector& p) { return loss.value(c.prior->x0_hat(p, c.alpha_bar)); };
    worst_grad = std::max(worst_grad, testing::relative_error(g.grad, testing::central_diff_gradient(f, c.x, h)));

    Rng rng = make_rng(kSeed, 5000 + i);
    const Vector v = standard_normal_vector(rng, c.x.size());
    const auto map = [&](const Vector& p) { return c.prior->x0_hat(p, c.alpha_bar); };
    // The Jacobian of the posterior mean is symmetric, so J v = v^T J.
    const Vector fd = testing::central_diff_directional(map, c.x, v, h);
    worst_vjp = std::max(worst_vjp, testing::relative_error(c.prior->x0hat_vjp(c.x, c.alpha_bar, v), fd));
  }
  return {worst_grad <= kGradientRelTol && worst_vjp <= kGradientRelTol,
          std::to_string(kGradientTriples) + " triples, max relative error guidance_grad " + fmt(worst_grad) +
              ", x0hat_vjp " + fmt(worst_vjp) + " (tol " + fmt(kGradientRelTol) + ")"};
}

// Fraction of paired bootstrap resamples with median(a) < median(b).
double bootstrap_fraction(const std::vector<double>& a, const std::vector<double>& b) {
  Rng rng = make_rng(kSeed, 77);
  std::size_t wins = 0;
  std::vector<double> ra(a.size()), rb(b.size());
  for (std::size_t s = 0; s < kBootstrapResamples; ++s) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::size_t j = rng() % a.size();
      ra[i] = a[j];
      rb[i] = b[j];
    }
    if (median(ra) < median(rb)) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(kBootstrapResamples);
}

Outcome criterion_alignment() {
  const auto& runs = runs_at(100);
  const MethodRun& un = find_run(runs, "UNCOND");
  const MethodRun& dps = find_run(runs, "DPS");
  const MethodRun& dsg = find_run(runs, "DSG");
  const double frac_un = bootstrap_fraction(dsg.summary.final_residuals, un.summary.final_residuals);
  const double frac_dps = bootstrap_fraction(dsg.summary.final_residuals, dps.summary.final_residuals);
  const bool ok = median_of(dsg) < median_of(dps) && frac_un >= kBootstrapFraction;
  return {ok, "median residual DSG " + fmt(median_of(dsg)) + ", DPS " + fmt(median_of(dps)) + " (gamma " +
                  fmt(dps.sampler.dps_step_size.value_or(0.0)) + "), UNCOND " + fmt(median_of(un)) +
                  "; bootstrap P(DSG < UNCOND) " + fmt(frac_un) + ", P(DSG < DPS) " + fmt(frac_dps)};
}

Outcome criterion_step_robustness() {
  const auto& r100 = runs_at(100);
  const auto& r50 = runs_at(50);
  const auto& r20 = runs_at(20);
  const double dsg_infl = median_of(find_run(r20, "DSG")) / median_of(find_run(r100, "DSG"));
  const double dps_infl = median_of(find_run(r20, "DPS")) / median_of(find_run(r100, "DPS"));
  const double pdsg20 = median_of(find_run(r20, "PDSG"));
  const double dps20 = median_of(find_run(r20, "DPS"));
  const bool ok = dsg_infl < dps_infl && pdsg20 < dps20;
  return {ok, "inflation 100->20 DSG " + fmt(dsg_infl) + " vs DPS " + fmt(dps_infl) + " (50 steps: DSG " +
                  fmt(median_of(find_run(r50, "DSG"))) + ", DPS " + fmt(median_of(find_run(r50, "DPS"))) +
                  "); at 20 steps PDSG " + fmt(pdsg20) + " vs DPS " + fmt(dps20)};
}

Outcome criterion_manifold_band() {
  const Inpainting& d = inpainting();
  MethodEntry dsg01{"DSG_0.1", {}, false, 1.0};
  dsg01.sampler.method = Method::Dsg;
  dsg01.sampler.guidance_rate = 0.1;
  MethodEntry dsg02 = dsg01;
  dsg02.label = "DSG_0.2";
  dsg02.sampler.guidance_rate = 0.2;
  MethodEntry dps{"DPS_x10", {}, true, kDpsBandStepScale};
  dps.sampler.method = Method::Dps;
  const auto runs = run_methods(d.config, d.instance, {dsg01, dsg02, dps}, {100, g_jobs});
  const BandOptions band{kBandTolerance, kBandMaxAlphaBar, BandOptions{}.resolution};

  auto scan = [&](const MethodRun& r) {
    BandReport total;
    total.min_ratio = std::numeric_limits<double>::infinity();
    for (const Trajectory& t : r.trajectories) {
      const BandReport b = deviation_band(t, *d.prior, d.schedule, band);
      total.checked_steps += b.checked_steps;
      total.in_band += b.in_band;
      total.exits += b.exits;
      total.unresolved_steps += b.unresolved_steps;
      if (b.in_band + b.exits > 0) {
        total.min_ratio = std::min(total.min_ratio, b.min_ratio);
        total.max_ratio = std::max(total.max_ratio, b.max_ratio);
      }
    }
    return total;
  };
  const BandReport a = scan(runs[0]);
  const BandReport b = scan(runs[1]);
  const BandReport c = scan(runs[2]);
  const bool dsg_ok = a.exits == 0 && b.exits == 0 && a.unresolved_steps == 0 && b.unresolved_steps == 0;
  const bool dps_exits = c.exits > 0;
  auto describe = [](const std::string& name, const BandReport& r) {
    return name + " " + std::to_string(r.exits) + "/" + std::to_string(r.checked_steps) + " exits, ratio [" +
           fmt(r.min_ratio) + ", " + fmt(r.max_ratio) + "], unresolved " + std::to_string(r.unresolved_steps);
  };
  return {dsg_ok && dps_exits, describe("DSG g_r=0.1", a) + "; " + describe("DSG g_r=0.2", b) + "; " +
                                   describe("DPS gamma=" + fmt(runs[2].sampler.dps_step_size.value_or(0.0)), c)};
}

Outcome criterion_overhead() {
  const Inpainting& d = inpainting();
  const auto& runs = runs_at(100);
  const SamplerConfig dps = find_run(runs, "DPS").sampler;
  const SamplerConfig dsg = find_run(runs, "DSG").sampler;
  const int steps = find_run(runs, "DSG").steps;
  const Measurement& m = *d.instance.measurement;
  auto time_batch = [&](const SamplerConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    double sink = 0.0;
    for (std::size_t i = 0; i < kTimingTrajectories; ++i) {
      sink += sample_trajectory(*d.prior, d.schedule, cfg, &m, i).x0[0];
    }
    const double elapsed = seconds_since(start);
    g_sink = sink;
    return elapsed;
  };
  time_batch(dps);  // warm-up
  double total_dps = 0.0;
  double total_dsg = 0.0;
  for (int round = 0; round < kTimingRounds; ++round) {
    // Alternate the order so slow drifts affect both methods alike.
    if (round % 2 == 0) {
      total_dps += time_batch(dps);
      total_dsg += time_batch(dsg);
    } else {
      total_dsg += time_batch(dsg);
      total_dps += time_batch(dps);
    }
  }
  const double per_step = static_cast<double>(kTimingRounds * kTimingTrajectories) * steps;
  const double ratio = total_dsg / total_dps;
  return {ratio <= kOverheadRatio, "mean step time DSG " + fmt(1e6 * total_dsg / per_step) + " us, DPS " +
                                       fmt(1e6 * total_dps / per_step) + " us, ratio " + fmt(ratio) + " (max " +
                                       fmt(kOverheadRatio) + ")"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every regular file under a, compared with its counterpart under b.
bool identical_trees(const fs::path& a, const fs::path& b, std::size_t& files, std::string& first_diff) {
  std::size_t count_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file()) ++count_b;
  }
  files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
      if (first_diff.empty()) first_diff = fs::relative(e.path(), a).string();
      return false;
    }
  }
  return files == count_b;
}

Outcome criterion_determinism() {
  const fs::path root = fs::temp_directory_path() / "dsg_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path config = root / "inpainting.json";
  std::ofstream(config) << kInpaintingConfig;
  std::ostringstream sink;
  const unsigned wide = std::max(8u, resolve_jobs(0));

  bool ok = true;
  std::string detail;
  std::size_t total_files = 0;
  const std::vector<std::pair<std::string, unsigned>> variants{{"a", 1}, {"b", 1}, {"c", wide}};
  for (const auto& [tag, jobs] : variants) {
    CommonOptions o;
    o.seed = kSeed;
    o.jobs = jobs;
    o.out = root / tag / "verify";
    if (cmd_verify(o, "all", sink, sink) != kExitOk) {
      ok = false;
      detail += "verify failed (" + tag + "); ";
    }
    CommonOptions r;
    r.config = config;
    r.jobs = jobs;
    r.out = root / tag / "run";
    if (cmd_run(r, sink, sink) != kExitOk) {
      ok = false;
      detail += "run failed (" + tag + "); ";
    }
  }
  for (const char* other : {"b", "c"}) {
    std::size_t files = 0;
    std::string diff;
    if (!identical_trees(root / "a", root / other, files, diff)) {
      ok = false;
      detail += std::string("a vs ") + other + " differ at " + (diff.empty() ? "<file count>" : diff) + "; ";
    }
    total_files = files;
  }
  detail += std::to_string(total_files) + " files per tree, jobs 1 / 1 / " + std::to_string(wide);
  if (ok) fs::remove_all(root);
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--jobs") == 0 && i + 1 < argc) {
      g_jobs = resolve_jobs(static_cast<unsigned>(std::stoul(argv[++i])));
    } else if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only.push_back(std::stoi(argv[++i]));
    } else {
      std::cerr << "usage: dsg_acceptance [--jobs N] [--only K]...\n";
      return 2;
    }
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"closed-form sphere optimality", criterion_closed_form},
      {"sphere constraint invariant", criterion_sphere_constraint},
      {"norm concentration", criterion_concentration},
      {"Jensen-gap lower bound", criterion_jensen},
      {"gradient correctness", criterion_gradients},
      {"alignment ordering", criterion_alignment},
      {"step-count robustness", criterion_step_robustness},
      {"manifold adherence", criterion_manifold_band},
      {"guidance overhead", criterion_overhead},
      {"determinism", criterion_determinism},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.passed) ++failed;
    std::printf("%s  C%-2d %-30s %s [%.1f s]\n", o.passed ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), seconds_since(start));
    std::fflush(stdout);
  }
  return std::min(failed, 125);
}
