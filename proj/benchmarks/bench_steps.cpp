// SPDX-License-Identifier: Apache-2.0
#include <memory>

#include <benchmark/benchmark.h>

#include <dsg/analysis.hpp>

namespace {

using namespace dsg;

struct Workload {
  SubspacePrior prior = SubspacePrior::random(256, 8, 2.0, 11);
  NoiseSchedule schedule = NoiseSchedule::linear(1000, 1e-4, 0.02);
  std::shared_ptr<const LinearForwardOperator> op =
      std::make_shared<const LinearForwardOperator>(make_mask_operator(256, 0.08, 12, 0.05));
  Measurement m = measure(op, prior.sample_clean(1, 13).front(), 14);
  QuadraticGuidanceLoss loss{m};
  DiffusionState state;
  Vector noise;

  explicit Workload(int t) {
    Rng rng = make_rng(1, 2);
    const double ab = schedule.alpha_bar(t);
    state = {std::sqrt(ab) * prior.sample_clean(1, 3).front() +
                 std::sqrt(1.0 - ab) * standard_normal_vector(rng, 256),
             t};
    noise = standard_normal_vector(rng, 256);
  }
};

void BM_UncondStep(benchmark::State& s) {
  const Workload w(static_cast<int>(s.range(0)));
  for (auto _ : s) benchmark::DoNotOptimize(uncond_step(w.prior, w.schedule, w.state, w.noise));
}

void BM_DpsStep(benchmark::State& s) {
  const Workload w(static_cast<int>(s.range(0)));
  for (auto _ : s) benchmark::DoNotOptimize(dps_step(w.prior, w.schedule, w.state, w.loss, 1.0, w.noise));
}

void BM_DsgStep(benchmark::State& s) {
  const Workload w(static_cast<int>(s.range(0)));
  for (auto _ : s) benchmark::DoNotOptimize(dsg_step(w.prior, w.schedule, w.state, w.loss, 0.2, w.noise));
}

void BM_PdsgStep(benchmark::State& s) {
  const Workload w(static_cast<int>(s.range(0)));
  for (auto _ : s) benchmark::DoNotOptimize(pdsg_step(w.prior, w.schedule, w.state, w.loss, 10.0, w.noise));
}

void BM_LgdStep(benchmark::State& s) {
  const Workload w(static_cast<int>(s.range(0)));
  const LgdParams p{3, 0.5, 1.0};
  for (auto _ : s) benchmark::DoNotOptimize(lgd_step(w.prior, w.schedule, w.state, w.loss, p, w.noise, 7));
}

void BM_DsgUpdate(benchmark::State& s) {
  Rng rng = make_rng(4, 5);
  const auto n = static_cast<Eigen::Index>(s.range(0));
  const Vector mu = standard_normal_vector(rng, n);
  const Vector g = standard_normal_vector(rng, n);
  const Vector e = standard_normal_vector(rng, n);
  for (auto _ : s) benchmark::DoNotOptimize(dsg_update(mu, 0.3, g, e, 0.2));
}

void BM_Trajectory(benchmark::State& s) {
  const Workload w(1000);
  SamplerConfig cfg;
  cfg.method = static_cast<Method>(s.range(0));
  cfg.guidance_rate = cfg.method == Method::Dsg ? std::optional<double>(0.2) : std::nullopt;
  if (cfg.method == Method::Dps || cfg.method == Method::Pdsg) cfg.dps_step_size = 1.0;
  cfg.ddim_steps = evenly_spaced_steps(1000, 100);
  std::uint64_t i = 0;
  for (auto _ : s) benchmark::DoNotOptimize(sample_trajectory(w.prior, w.schedule, cfg, &w.m, i++));
}

}  // namespace

BENCHMARK(BM_UncondStep)->Arg(500);
BENCHMARK(BM_DpsStep)->Arg(50)->Arg(500)->Arg(950);
BENCHMARK(BM_DsgStep)->Arg(50)->Arg(500)->Arg(950);
BENCHMARK(BM_PdsgStep)->Arg(500);
BENCHMARK(BM_LgdStep)->Arg(500);
BENCHMARK(BM_DsgUpdate)->Arg(256)->Arg(4096);
BENCHMARK(BM_Trajectory)
    ->Arg(static_cast<int>(dsg::Method::Dps))
    ->Arg(static_cast<int>(dsg::Method::Dsg))
    ->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
