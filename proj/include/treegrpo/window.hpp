#pragma once

/**
 * Per-epoch SDE window selection. A window is a contiguous block of `length`
 * step indices; the start is drawn from a truncated geometric law (biased
 * toward early steps), advanced cyclically (shifting), or held fixed.
 */

#include <vector>

#include "treegrpo/rng.hpp"

namespace treegrpo::window {

enum class Strategy { kRandom, kShifting, kFixed };

struct WindowPlan {
  int start = 0;
  int length = 0;
  Strategy strategy = Strategy::kRandom;
  int epoch = 0;
  double draw = 0.0;  // uniform variate consumed by the random strategy

  std::vector<int> steps() const {
    std::vector<int> s(static_cast<size_t>(length));
    for (int i = 0; i < length; ++i) s[i] = start + i;
    return s;
  }
};

// Pr[i] = (1 - r) r^i / (1 - r^{T-w}) over starts i in {0, ..., T-w-1}.
std::vector<double> window_start_pmf(int horizon, int length, double r);

// Inverse-CDF draw from window_start_pmf. Requires 0 < r < 1, 1 <= w <= T-1.
int sample_window_start(int horizon, int length, double r, rng::Stream& stream);

// start = (epoch * stride) mod (T - w); deterministic in the epoch.
WindowPlan shifting_window(int epoch, int horizon, int length, int stride);

WindowPlan fixed_window(int epoch, int horizon, int length, int start);

WindowPlan random_window(int epoch, int horizon, int length, double r,
                         rng::Stream& stream);

}  // namespace treegrpo::window
