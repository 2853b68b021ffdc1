#include "treegrpo/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace treegrpo::grpo {

double importance_ratio(const flow::VelocityModel& model,
                        const sampler::Transition& transition,
                        const sampler::Schedule& schedule) {
  const double current = sampler::transition_logprob(model, transition, schedule);
  const double ratio = std::exp(current - transition.logprob);
  if (!std::isfinite(ratio)) {
    throw std::runtime_error("importance ratio is not finite");
  }
  return ratio;
}

GrpoLossResult grpo_loss(const flow::VelocityField& model,
                         const EdgeBatch& batch, double clip,
                         const sampler::Schedule& schedule, bool mean_loss) {
  if (batch.empty()) throw std::invalid_argument("grpo_loss: empty batch");
  if (!(clip > 0.0)) throw std::invalid_argument("grpo_loss: clip must be > 0");

  GrpoLossResult result;
  result.grad.assign(model.param_count(), 0.0);
  std::vector<double> edge_grad(model.param_count());
  int clipped = 0;

  for (const EdgeSample& sample : batch) {
    if (!(sample.transition.std_dev > 0.0)) {
      throw std::invalid_argument("grpo_loss: batch contains a deterministic edge");
    }
    std::fill(edge_grad.begin(), edge_grad.end(), 0.0);
    const double logp = sampler::transition_logprob_grad(
        model, sample.transition, schedule, edge_grad);
    const double ratio = std::exp(logp - sample.transition.logprob);
    if (!std::isfinite(ratio)) {
      throw std::runtime_error("grpo_loss: non-finite importance ratio");
    }
    const double advantage = sample.advantage;
    const double unclipped = ratio * advantage;
    const double clipped_ratio = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
    const double clipped_term = clipped_ratio * advantage;
    result.loss -= std::min(unclipped, clipped_term);
    if (clipped_term < unclipped) {
      // clip binds: the objective is locally constant in theta on this edge
      ++clipped;
    } else {
      // d(-ratio * A)/d(theta) = -A * ratio * d(logp)/d(theta)
      const double scale = -advantage * ratio;
      for (size_t i = 0; i < result.grad.size(); ++i) {
        result.grad[i] += scale * edge_grad[i];
      }
    }
  }
  result.clip_fraction = static_cast<double>(clipped) / batch.size();
  if (mean_loss) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    result.loss *= inv;
    for (double& g : result.grad) g *= inv;
  }
  return result;
}

UpdateMetrics PolicyUpdater::update(flow::VelocityField& model,
                                    const EdgeBatch& batch,
                                    const sampler::Schedule& schedule) {
  if (batch.empty()) throw std::invalid_argument("update: empty batch");
  const size_t n_params = model.param_count();
  if (m_.empty()) {
    m_.assign(n_params, 0.0);
    v_.assign(n_params, 0.0);
  }

  const size_t micro = config_.micro_batch > 0
                           ? static_cast<size_t>(config_.micro_batch)
                           : batch.size();
  UpdateMetrics metrics;
  double loss_total = 0.0;
  double clip_total = 0.0;
  int chunks = 0;

  for (size_t begin = 0; begin < batch.size(); begin += micro) {
    const size_t end = std::min(begin + micro, batch.size());
    EdgeBatch chunk(batch.begin() + begin, batch.begin() + end);
    GrpoLossResult loss = grpo_loss(model, chunk, config_.clip, schedule,
                                    config_.mean_loss);
    ++chunks;
    loss_total += loss.loss;
    clip_total += loss.clip_fraction * chunk.size();

    double norm_sq = 0.0;
    bool finite = std::isfinite(loss.loss);
    for (double g : loss.grad) {
      if (!std::isfinite(g)) {
        finite = false;
        break;
      }
      norm_sq += g * g;
    }
    if (!finite) {
      ++metrics.skipped_steps;  // skip the step, keep training
      continue;
    }
    metrics.grad_norm = std::sqrt(norm_sq);

    ++step_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    std::span<double> params = model.params();
    for (size_t i = 0; i < n_params; ++i) {
      const double g = loss.grad[i];
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g * g;
      const double update = (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + config_.adam_eps);
      params[i] -= config_.learning_rate *
                   (update + config_.weight_decay * params[i]);
    }
  }
  metrics.loss = loss_total / chunks;
  metrics.clip_fraction = clip_total / static_cast<double>(batch.size());
  return metrics;
}

void refresh_behavior(PolicyPair& pair) { pair.behavior = pair.policy; }

}  // namespace treegrpo::grpo
