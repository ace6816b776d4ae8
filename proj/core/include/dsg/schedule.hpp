// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

namespace dsg {

/// Coefficients of one DDIM update
///   x_{t-1} = coef_x0 * x0_hat + coef_eps * eps_hat + sigma * noise.
struct DdimCoefficients {
  double coef_x0 = 0.0;
  double coef_eps = 0.0;
  double sigma = 0.0;
};

/// Cumulative signal coefficients alpha_bar[0..T] of a discrete diffusion,
/// alpha_bar[0] = 1, plus the DDIM stochasticity eta.
///
/// A schedule can be restricted to a strictly increasing subset of its steps;
/// the result is again a NoiseSchedule (indexed 1..K) whose labels remember
/// the original step numbers.
class NoiseSchedule {
 public:
  /// beta_s interpolated linearly from beta_min (s = 1) to beta_max (s = T).
  static NoiseSchedule linear(int steps, double beta_min, double beta_max, double eta = 1.0);

  /// Validates alpha_bar[0] == 1, strictly decreasing entries in (0, 1].
  static NoiseSchedule from_alpha_bar(std::vector<double> alpha_bar, double eta = 1.0);

  int steps() const { return static_cast<int>(alpha_bar_.size()) - 1; }
  double eta() const { return eta_; }
  double alpha_bar(int t) const;
  const std::vector<double>& alpha_bars() const { return alpha_bar_; }

  /// Original step number of index t (identity unless restricted).
  int label(int t) const;

  /// sigma_t = eta * sqrt((1 - abar_{t-1}) / (1 - abar_t)) * sqrt(1 - abar_t / abar_{t-1}).
  double sigma(int t) const;
  DdimCoefficients ddim_coeffs(int t) const;

  /// Induced schedule on the given steps (strictly increasing, within 1..T,
  /// last element T). Index 0 of the result is always the clean state.
  NoiseSchedule restrict_to(std::span<const int> retained) const;

  NoiseSchedule with_eta(double eta) const;

 private:
  NoiseSchedule(std::vector<double> alpha_bar, std::vector<int> labels, double eta);
  void check_step(int t) const;

  std::vector<double> alpha_bar_;
  std::vector<int> labels_;
  double eta_ = 1.0;
};

/// `count` evenly spaced steps of a `total`-step schedule, always ending at
/// `total`: floor(i * total / count) for i = 1..count.
std::vector<int> evenly_spaced_steps(int total, int count);

/// Serializable description of a schedule. `ddim_steps` is the number of
/// retained sampling steps (0 means all of them).
struct ScheduleSpec {
  int steps = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  double eta = 1.0;
  int ddim_steps = 0;

  NoiseSchedule build() const;
  std::vector<int> retained_steps() const;
};

}  // namespace dsg
