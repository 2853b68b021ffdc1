#include "treegrpo/window.hpp"

#include <cmath>
#include <stdexcept>

namespace treegrpo::window {

namespace {

void check_window_args(int horizon, int length, double r) {
  if (length < 1 || length > horizon - 1) {
    throw std::invalid_argument("window length must satisfy 1 <= w <= T-1");
  }
  if (!(r > 0.0) || !(r < 1.0)) {
    throw std::invalid_argument("geometric parameter r must lie in (0, 1)");
  }
}

}  // namespace

std::vector<double> window_start_pmf(int horizon, int length, double r) {
  check_window_args(horizon, length, r);
  const int n = horizon - length;  // starts 0 .. n-1
  const double norm = 1.0 - std::pow(r, n);
  std::vector<double> pmf(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    pmf[i] = (1.0 - r) * std::pow(r, i) / norm;
  }
  return pmf;
}

int sample_window_start(int horizon, int length, double r,
                        rng::Stream& stream) {
  const std::vector<double> pmf = window_start_pmf(horizon, length, r);
  const double u = stream.uniform01();
  double cumulative = 0.0;
  for (size_t i = 0; i < pmf.size(); ++i) {
    cumulative += pmf[i];
    if (u < cumulative) return static_cast<int>(i);
  }
  return static_cast<int>(pmf.size()) - 1;  // guards the u ~ 1 edge
}

WindowPlan shifting_window(int epoch, int horizon, int length, int stride) {
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
  if (length < 1 || length > horizon - 1) {
    throw std::invalid_argument("window length must satisfy 1 <= w <= T-1");
  }
  WindowPlan plan;
  plan.strategy = Strategy::kShifting;
  plan.epoch = epoch;
  plan.length = length;
  plan.start = (epoch * stride) % (horizon - length);
  return plan;
}

WindowPlan fixed_window(int epoch, int horizon, int length, int start) {
  if (length < 1 || length > horizon - 1) {
    throw std::invalid_argument("window length must satisfy 1 <= w <= T-1");
  }
  if (start < 0 || start > horizon - length - 1) {
    throw std::invalid_argument("fixed window start out of range");
  }
  WindowPlan plan;
  plan.strategy = Strategy::kFixed;
  plan.epoch = epoch;
  plan.length = length;
  plan.start = start;
  return plan;
}

WindowPlan random_window(int epoch, int horizon, int length, double r,
                         rng::Stream& stream) {
  WindowPlan plan;
  plan.strategy = Strategy::kRandom;
  plan.epoch = epoch;
  plan.length = length;
  plan.draw = stream.uniform01();
  // re-run the inverse CDF on the recorded draw
  const std::vector<double> pmf = window_start_pmf(horizon, length, r);
  double cumulative = 0.0;
  plan.start = static_cast<int>(pmf.size()) - 1;
  for (size_t i = 0; i < pmf.size(); ++i) {
    cumulative += pmf[i];
    if (plan.draw < cumulative) {
      plan.start = static_cast<int>(i);
      break;
    }
  }
  return plan;
}

}  // namespace treegrpo::window
