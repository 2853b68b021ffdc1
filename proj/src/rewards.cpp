#include "treegrpo/rewards.hpp"

#include <cmath>
#include <stdexcept>

namespace treegrpo::rewards {

double mode_proximity(std::span<const double> sample, int condition,
                      const flow::SyntheticTask& task) {
  if (condition < 0 || condition >= task.num_conditions()) {
    throw std::invalid_argument("mode_proximity: unknown condition");
  }
  const std::vector<double>& center = task.centers[static_cast<size_t>(condition)];
  if (sample.size() != center.size()) {
    throw std::invalid_argument("mode_proximity: dimension mismatch");
  }
  double sq = 0.0;
  for (size_t i = 0; i < sample.size(); ++i) {
    const double d = sample[i] - center[i];
    sq += d * d;
  }
  return -sq;
}

double ring_reward(std::span<const double> sample, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("ring radius must be > 0");
  double sq = 0.0;
  for (double v : sample) sq += v * v;
  const double d = std::sqrt(sq) - radius;
  return -d * d;
}

std::unique_ptr<RewardModel> make_reward(const std::string& name,
                                         const flow::SyntheticTask& task,
                                         double ring_radius) {
  if (name == "mode_proximity") {
    return std::make_unique<ModeProximityReward>(task);
  }
  if (name == "ring") {
    return std::make_unique<RingReward>(ring_radius);
  }
  throw std::invalid_argument("unknown reward model: " + name);
}

double RewardStats::stddev() const {
  return std::max(std::sqrt(std::max(variance, 0.0)), sigma_floor);
}

void update_stats(RewardStats& stats, std::span<const double> batch) {
  if (batch.empty()) throw std::invalid_argument("update_stats: empty batch");
  double mean = 0.0;
  for (double v : batch) mean += v;
  mean /= static_cast<double>(batch.size());
  double var = 0.0;
  for (double v : batch) var += (v - mean) * (v - mean);
  var /= static_cast<double>(batch.size());  // population convention

  if (stats.update_count == 0) {
    stats.mean = mean;
    stats.variance = var;
  } else {
    stats.mean = stats.decay * stats.mean + (1.0 - stats.decay) * mean;
    stats.variance = stats.decay * stats.variance + (1.0 - stats.decay) * var;
  }
  ++stats.update_count;
}

}  // namespace treegrpo::rewards
