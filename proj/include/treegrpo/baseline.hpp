#pragma once

/**
 * Trajectory-GRPO baseline: G independent full-SDE trajectories per prompt,
 * one terminal reward each, group-normalized and applied uniformly to every
 * step of its trajectory. The contrast case for per-edge credit assignment.
 */

#include <functional>
#include <vector>

#include "treegrpo/grpo.hpp"

namespace treegrpo::baseline {

struct TrajectoryBatch {
  int condition = 0;
  std::vector<std::vector<sampler::Transition>> trajectories;  // G x T
  std::vector<std::vector<double>> terminals;                  // G samples
  std::vector<double> advantages;  // one per trajectory, set by the caller
  long long nfe = 0;               // G * T
};

// Every step is stochastic: sigma_k > 0 for all k (requires noise_coeff > 0).
// Each trajectory draws from its own stream derived from `stream`.
TrajectoryBatch trajectory_collect(const flow::VelocityModel& model,
                                   int condition, int group_size,
                                   const sampler::Schedule& schedule,
                                   rng::Stream stream);

// Expands per-trajectory advantages onto every edge. Requires advantages to
// be set (size G).
grpo::EdgeBatch to_edge_batch(const TrajectoryBatch& batch);

// Terminal reward of one sample under the prompt's condition.
using RewardFn = std::function<double(std::span<const double>, int)>;

// trajectory_collect, then group-normalized terminal rewards as uniform
// per-trajectory advantages. Group size must be >= 2.
TrajectoryBatch trajectory_grpo_collect(const flow::VelocityModel& model,
                                        int condition, int group_size,
                                        const sampler::Schedule& schedule,
                                        rng::Stream stream,
                                        const RewardFn& reward);

}  // namespace treegrpo::baseline
