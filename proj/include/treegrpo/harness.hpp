#pragma once

/**
 * Experiment orchestration: the outer training loop (window selection, tree
 * building, leaf evaluation, backup, policy update, behavior refresh),
 * deterministic seeding, evaluation, and run persistence.
 *
 * Everything numeric in the log except wall-clock time is a pure function of
 * (config, seed).
 */

#include <memory>
#include <vector>

#include "treegrpo/baseline.hpp"
#include "treegrpo/config.hpp"
#include "treegrpo/runlog.hpp"
#include "treegrpo/tree.hpp"

namespace treegrpo::harness {

// Reward models named by the config plus their running statistics.
struct RewardBank {
  std::vector<rewards::RewardSpec> specs;
  std::vector<std::unique_ptr<rewards::RewardModel>> models;
  std::vector<rewards::RewardStats> stats;

  static RewardBank from_config(const config::RunConfig& cfg);
  std::vector<double> weights() const;
  std::vector<double> score_all(std::span<const double> sample,
                                int condition) const;
};

// Mean raw reward per model over ODE rollouts (no branching), averaged over
// the prompt set. Requires samples_per_prompt >= 1; the result does not
// depend on prompt order.
std::vector<double> evaluate(const flow::VelocityModel& model,
                             const RewardBank& bank,
                             std::span<const int> prompts,
                             int samples_per_prompt,
                             const sampler::Schedule& schedule, uint64_t seed);

// Loads cfg.checkpoint_path if set, otherwise pretrains on the config task
// with the pretraining seed (so RL seeds share one checkpoint).
flow::VelocityField prepare_model(const config::RunConfig& cfg);

struct TrainResult {
  flow::VelocityField model;
  runlog::RunLog log;
  runlog::RunSummary summary;
};

// Runs the configured method starting from `initial`. Pure apart from clock
// reads; writes nothing to disk.
TrainResult run_training(const config::RunConfig& cfg,
                         const flow::VelocityField& initial);

// Writes runlog.csv, summary.json and model_final.ckpt under cfg.out_dir.
void persist_run(const TrainResult& result, const config::RunConfig& cfg);

}  // namespace treegrpo::harness
