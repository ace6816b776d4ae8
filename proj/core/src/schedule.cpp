// SPDX-License-Identifier: Apache-2.0
#include "dsg/schedule.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dsg {

namespace {

// Round-off slack for 1 - abar_{t-1} - sigma^2, which is exactly zero at eta = 1, t = 1.
constexpr double kRadicandSlack = 1e-14;

}  // namespace

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_bar, std::vector<int> labels, double eta)
    : alpha_bar_(std::move(alpha_bar)), labels_(std::move(labels)), eta_(eta) {}

NoiseSchedule NoiseSchedule::linear(int steps, double beta_min, double beta_max, double eta) {
  if (steps < 1) throw std::invalid_argument("schedule: step count must be >= 1");
  if (!(beta_min > 0.0) || !(beta_max < 1.0) || beta_max < beta_min) {
    throw std::invalid_argument("schedule: need 0 < beta_min <= beta_max < 1");
  }
  std::vector<double> alpha_bar(static_cast<std::size_t>(steps) + 1);
  alpha_bar[0] = 1.0;
  for (int s = 1; s <= steps; ++s) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(s - 1) / (steps - 1);
    const double beta = beta_min + (beta_max - beta_min) * frac;
    alpha_bar[s] = alpha_bar[s - 1] * (1.0 - beta);
  }
  return from_alpha_bar(std::move(alpha_bar), eta);
}

NoiseSchedule NoiseSchedule::from_alpha_bar(std::vector<double> alpha_bar, double eta) {
  if (alpha_bar.size() < 2) throw std::invalid_argument("schedule: need at least one step");
  if (alpha_bar[0] != 1.0) throw std::invalid_argument("schedule: alpha_bar[0] must equal 1");
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("schedule: eta must lie in [0, 1]");
  for (std::size_t t = 1; t < alpha_bar.size(); ++t) {
    if (!(alpha_bar[t] > 0.0 && alpha_bar[t] < alpha_bar[t - 1])) {
      throw std::invalid_argument("schedule: alpha_bar must be strictly decreasing in (0, 1]; violated at t=" +
                                  std::to_string(t));
    }
  }
  std::vector<int> labels(alpha_bar.size());
  std::iota(labels.begin(), labels.end(), 0);
  return NoiseSchedule(std::move(alpha_bar), std::move(labels), eta);
}

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > steps()) {
    throw std::out_of_range("schedule: step " + std::to_string(t) + " outside 1.." + std::to_string(steps()));
  }
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > steps()) throw std::out_of_range("schedule: index " + std::to_string(t) + " out of range");
  return alpha_bar_[static_cast<std::size_t>(t)];
}

int NoiseSchedule::label(int t) const {
  if (t < 0 || t > steps()) throw std::out_of_range("schedule: index " + std::to_string(t) + " out of range");
  return labels_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::sigma(int t) const {
  check_step(t);
  if (eta_ == 0.0) return 0.0;
  const double a_t = alpha_bar_[static_cast<std::size_t>(t)];
  const double a_prev = alpha_bar_[static_cast<std::size_t>(t) - 1];
  return eta_ * std::sqrt((1.0 - a_prev) / (1.0 - a_t)) * std::sqrt(1.0 - a_t / a_prev);
}

DdimCoefficients NoiseSchedule::ddim_coeffs(int t) const {
  const double sig = sigma(t);
  const double a_prev = alpha_bar_[static_cast<std::size_t>(t) - 1];
  double radicand = 1.0 - a_prev - sig * sig;
  if (radicand < 0.0) {
    if (radicand < -kRadicandSlack) {
      throw std::domain_error("schedule: negative DDIM direction coefficient at t=" + std::to_string(t));
    }
    radicand = 0.0;
  }
  return {std::sqrt(a_prev), std::sqrt(radicand), sig};
}

NoiseSchedule NoiseSchedule::restrict_to(std::span<const int> retained) const {
  if (retained.empty()) throw std::invalid_argument("schedule: retained step list is empty");
  if (retained.back() != steps()) throw std::invalid_argument("schedule: retained steps must end at T");
  std::vector<double> alpha_bar{1.0};
  std::vector<int> labels{0};
  int previous = 0;
  for (int t : retained) {
    if (t <= previous || t > steps()) {
      throw std::invalid_argument("schedule: retained steps must be strictly increasing within 1..T");
    }
    alpha_bar.push_back(alpha_bar_[static_cast<std::size_t>(t)]);
    labels.push_back(labels_[static_cast<std::size_t>(t)]);
    previous = t;
  }
  return NoiseSchedule(std::move(alpha_bar), std::move(labels), eta_);
}

NoiseSchedule NoiseSchedule::with_eta(double eta) const {
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("schedule: eta must lie in [0, 1]");
  return NoiseSchedule(alpha_bar_, labels_, eta);
}

std::vector<int> evenly_spaced_steps(int total, int count) {
  if (total < 1 || count < 1 || count > total) {
    throw std::invalid_argument("schedule: need 1 <= count <= total for evenly spaced steps");
  }
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 1; i <= count; ++i) {
    out.push_back(static_cast<int>((static_cast<long long>(i) * total) / count));
  }
  return out;
}

NoiseSchedule ScheduleSpec::build() const { return NoiseSchedule::linear(steps, beta_min, beta_max, eta); }

std::vector<int> ScheduleSpec::retained_steps() const {
  return evenly_spaced_steps(steps, ddim_steps == 0 ? steps : ddim_steps);
}

}  // namespace dsg
