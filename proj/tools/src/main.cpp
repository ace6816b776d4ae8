// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsg_lab/commands.hpp"

namespace {

struct RawOptions {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  std::string mc;
  unsigned jobs = 1;
};

void add_common(CLI::App* cmd, RawOptions& raw, bool needs_config) {
  auto* cfg = cmd->add_option("--config", raw.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  if (needs_config) cfg->required();
  cmd->add_option("--seed", raw.seed, "Base seed");
  cmd->add_option("--out", raw.out, "Output directory");
  cmd->add_option("--mc", raw.mc, "Monte Carlo budget: draws for verify, trajectories per method otherwise (e.g. 1e6)");
  cmd->add_option("--jobs", raw.jobs, "Worker threads, 0 = all cores")->default_val(1);
}

// Accepts integral values in plain or scientific notation.
std::size_t parse_count(const std::string& text) {
  std::size_t used = 0;
  const double v = std::stod(text, &used);
  if (used != text.size() || !(v >= 1.0) || v != std::floor(v) || v > 1e15) {
    throw CLI::ValidationError("--mc", "expected a positive integer, got '" + text + "'");
  }
  return static_cast<std::size_t>(v);
}

dsg::lab::CommonOptions resolve(const CLI::App* cmd, const RawOptions& raw) {
  dsg::lab::CommonOptions o;
  if (!raw.config.empty()) o.config = raw.config;
  if (cmd->count("--seed") > 0) o.seed = raw.seed;
  if (!raw.out.empty()) o.out = raw.out;
  if (!raw.mc.empty()) o.mc = parse_count(raw.mc);
  o.jobs = raw.jobs;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided diffusion sampling lab on analytic priors"};
  app.require_subcommand(1);

  RawOptions raw;
  std::string which = "all";
  std::vector<int> steps{100, 50, 20};
  std::vector<double> rates{0.0, 0.05, 0.1, 0.2, 0.5, 1.0};

  auto* verify = app.add_subcommand("verify", "Numerically certify the sampler's supporting propositions");
  add_common(verify, raw, false);
  verify->add_option("--which", which, "sphere, concentration, jensen, deviation or all");

  auto* run = app.add_subcommand("run", "Run every configured method and write logs and summaries");
  add_common(run, raw, true);

  auto* ablate = app.add_subcommand("ablate-steps", "Rerun the comparison at several sampling step counts");
  add_common(ablate, raw, true);
  ablate->add_option("--steps", steps, "Retained step counts")->delimiter(',');

  auto* sweep = app.add_subcommand("sweep-gr", "Sweep the guidance rate of DSG");
  add_common(sweep, raw, true);
  sweep->add_option("--gr", rates, "Guidance rates in [0, 1]")->delimiter(',');

  dsg::lab::CommonOptions options;
  try {
    app.parse(argc, argv);
    const CLI::App* chosen = app.get_subcommands().front();
    options = resolve(chosen, raw);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return dsg::lab::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return dsg::lab::kExitUsage;
  }

  if (verify->parsed()) return dsg::lab::cmd_verify(options, which, std::cout, std::cerr);
  if (run->parsed()) return dsg::lab::cmd_run(options, std::cout, std::cerr);
  if (ablate->parsed()) return dsg::lab::cmd_ablate_steps(options, steps, std::cout, std::cerr);
  return dsg::lab::cmd_sweep_gr(options, rates, std::cout, std::cerr);
}
