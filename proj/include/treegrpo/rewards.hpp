#pragma once

/**
 * Synthetic black-box rewards over terminal 2-D samples, plus the running
 * normalization statistics. Rewards are pure functions of (sample,
 * condition); scores are at most 0 with the maximum attained on target.
 */

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "treegrpo/flow_model.hpp"

namespace treegrpo::rewards {

// -position error: -(|| sample - center[condition] ||^2)
double mode_proximity(std::span<const double> sample, int condition,
                      const flow::SyntheticTask& task);

// -(|| sample || - radius)^2
double ring_reward(std::span<const double> sample, double radius);

class RewardModel {
 public:
  virtual ~RewardModel() = default;
  virtual const std::string& name() const = 0;
  virtual double score(std::span<const double> sample, int condition) const = 0;
};

class ModeProximityReward final : public RewardModel {
 public:
  explicit ModeProximityReward(flow::SyntheticTask task)
      : task_(std::move(task)) {}
  const std::string& name() const override { return name_; }
  double score(std::span<const double> sample, int condition) const override {
    return mode_proximity(sample, condition, task_);
  }

 private:
  std::string name_ = "mode_proximity";
  flow::SyntheticTask task_;
};

class RingReward final : public RewardModel {
 public:
  explicit RingReward(double radius) : radius_(radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("ring radius must be > 0");
  }
  const std::string& name() const override { return name_; }
  double score(std::span<const double> sample, int /*condition*/) const override {
    return ring_reward(sample, radius_);
  }

 private:
  std::string name_ = "ring";
  double radius_;
};

// Declared weight and plot-normalization ceiling for one reward model.
struct RewardSpec {
  std::string name;
  double weight = 1.0;   // nonnegative; active weights sum to 1
  double r_max = 0.0;    // best attainable raw score, used by plot-data
};

// name -> model; "mode_proximity" and "ring" are the registered kinds.
std::unique_ptr<RewardModel> make_reward(const std::string& name,
                                         const flow::SyntheticTask& task,
                                         double ring_radius);

// ============================================================================
// Running per-model statistics (EMA of batch population moments)
// ============================================================================

struct RewardStats {
  double mean = 0.0;
  double variance = 0.0;
  long long update_count = 0;
  double decay = 0.99;
  double sigma_floor = 1e-8;

  double stddev() const;
  double standardize(double raw) const { return (raw - mean) / stddev(); }
};

// First batch initializes (mean, variance) to the batch population moments;
// later batches blend with weight (1 - decay). decay = 1 freezes the stats
// after initialization.
void update_stats(RewardStats& stats, std::span<const double> batch);

}  // namespace treegrpo::rewards
