#include "treegrpo/baseline.hpp"

#include <stdexcept>

#include "treegrpo/advantage.hpp"

namespace treegrpo::baseline {

TrajectoryBatch trajectory_collect(const flow::VelocityModel& model,
                                   int condition, int group_size,
                                   const sampler::Schedule& schedule,
                                   rng::Stream stream) {
  if (group_size < 2) {
    throw std::invalid_argument("trajectory_collect: group size must be >= 2");
  }
  for (int k = 0; k < schedule.steps; ++k) {
    if (!(schedule.sigmas[k] > 0.0)) {
      throw std::invalid_argument(
          "trajectory baseline needs sigma_k > 0 at every step");
    }
  }

  TrajectoryBatch batch;
  batch.condition = condition;
  for (int g = 0; g < group_size; ++g) {
    rng::Stream traj_stream =
        stream.child(rng::stream_label::kTrajectory, static_cast<uint64_t>(g));
    std::vector<double> x(static_cast<size_t>(model.data_dim()));
    for (double& v : x) v = traj_stream.normal();  // own seed per trajectory

    std::vector<sampler::Transition> transitions;
    transitions.reserve(static_cast<size_t>(schedule.steps));
    for (int k = 0; k < schedule.steps; ++k) {
      sampler::Transition t =
          sampler::sde_step(model, x, k, condition, schedule, traj_stream);
      x = t.child;
      transitions.push_back(std::move(t));
    }
    batch.trajectories.push_back(std::move(transitions));
    batch.terminals.push_back(std::move(x));
  }
  batch.nfe = static_cast<long long>(group_size) * schedule.steps;
  return batch;
}

grpo::EdgeBatch to_edge_batch(const TrajectoryBatch& batch) {
  if (batch.advantages.size() != batch.trajectories.size()) {
    throw std::invalid_argument("to_edge_batch: advantages unset");
  }
  grpo::EdgeBatch edges;
  for (size_t g = 0; g < batch.trajectories.size(); ++g) {
    for (const sampler::Transition& t : batch.trajectories[g]) {
      edges.push_back({t, batch.advantages[g]});
    }
  }
  return edges;
}

TrajectoryBatch trajectory_grpo_collect(const flow::VelocityModel& model,
                                        int condition, int group_size,
                                        const sampler::Schedule& schedule,
                                        rng::Stream stream,
                                        const RewardFn& reward) {
  TrajectoryBatch batch =
      trajectory_collect(model, condition, group_size, schedule, stream);
  std::vector<double> rewards;
  rewards.reserve(batch.terminals.size());
  for (const std::vector<double>& terminal : batch.terminals) {
    rewards.push_back(reward(terminal, condition));
  }
  batch.advantages = advantage::leaf_advantages(rewards);
  return batch;
}

}  // namespace treegrpo::baseline
