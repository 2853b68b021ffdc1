#pragma once

/**
 * Clipped group-relative policy update over per-edge advantages.
 *
 * Loss over a batch of SDE-window edges e with stored behavior log-prob and
 * advantage A(e):
 *
 *   ratio(e) = exp(logpi_theta(e) - logpi_old(e))
 *   L = -sum_e min(ratio * A, clip(ratio, 1-eps, 1+eps) * A)
 *
 * Gradients flow only where the unclipped branch attains the min (standard
 * clipped-surrogate semantics). There is no KL term. Updates use AdamW with
 * decoupled weight decay and a fixed accumulation order.
 */

#include <span>
#include <vector>

#include "treegrpo/sampler.hpp"

namespace treegrpo::grpo {

struct UpdateConfig {
  double clip = 0.2;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int inner_epochs = 1;      // passes over each collected batch
  int refresh_cadence = 1;   // collected batches between behavior refreshes
  int micro_batch = 0;       // 0 = single step over the whole batch
  bool mean_loss = false;    // divide the edge sum by the edge count
};

struct EdgeSample {
  sampler::Transition transition;
  double advantage = 0.0;
};

using EdgeBatch = std::vector<EdgeSample>;

// exp(current log-prob - stored behavior log-prob). Throws on a non-finite
// result.
double importance_ratio(const flow::VelocityModel& model,
                        const sampler::Transition& transition,
                        const sampler::Schedule& schedule);

struct GrpoLossResult {
  double loss = 0.0;
  std::vector<double> grad;
  double clip_fraction = 0.0;  // share of edges where the clipped branch binds
};

GrpoLossResult grpo_loss(const flow::VelocityField& model,
                         const EdgeBatch& batch, double clip,
                         const sampler::Schedule& schedule,
                         bool mean_loss = false);

struct UpdateMetrics {
  double loss = 0.0;
  double grad_norm = 0.0;
  double clip_fraction = 0.0;
  int skipped_steps = 0;  // micro-batches dropped for non-finite gradients
};

// AdamW over grpo_loss. Moments persist across calls; micro-batches are
// processed in order with one optimizer step each.
class PolicyUpdater {
 public:
  explicit PolicyUpdater(UpdateConfig config) : config_(config) {}

  const UpdateConfig& config() const { return config_; }

  UpdateMetrics update(flow::VelocityField& model, const EdgeBatch& batch,
                       const sampler::Schedule& schedule);

 private:
  UpdateConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  long long step_ = 0;
};

// Trainable policy plus the frozen snapshot that samples and stores
// behavior log-probabilities.
struct PolicyPair {
  flow::VelocityField policy;
  flow::VelocityField behavior;

  explicit PolicyPair(flow::VelocityField initial)
      : policy(initial), behavior(std::move(initial)) {}
};

// theta_old <- theta. Immediately afterwards every importance ratio is 1.
void refresh_behavior(PolicyPair& pair);

}  // namespace treegrpo::grpo
