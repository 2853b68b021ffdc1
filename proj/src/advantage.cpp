#include "treegrpo/advantage.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace treegrpo::advantage {

std::vector<double> leaf_advantages(std::span<const double> scores,
                                    double sigma_floor) {
  if (scores.size() < 2) {
    throw std::invalid_argument("leaf_advantages: group size must be >= 2");
  }
  const double n = static_cast<double>(scores.size());
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= n;
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  var /= n;
  std::vector<double> advs(scores.size(), 0.0);
  if (var == 0.0) return advs;  // degenerate group: no relative signal
  const double sigma = std::max(std::sqrt(var), sigma_floor);
  for (size_t i = 0; i < scores.size(); ++i) {
    advs[i] = (scores[i] - mean) / sigma;
  }
  return advs;
}

std::vector<double> combine_multi_reward(
    const std::vector<std::vector<double>>& per_model_scores,
    std::span<const double> weights, MultiRewardMode mode,
    double sigma_floor) {
  if (per_model_scores.empty()) {
    throw std::invalid_argument("combine_multi_reward: no reward models");
  }
  if (per_model_scores.size() != weights.size()) {
    throw std::invalid_argument("combine_multi_reward: weights/models mismatch");
  }
  double weight_sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("reward weights must be >= 0");
    weight_sum += w;
  }
  if (std::abs(weight_sum - 1.0) > 1e-9) {
    throw std::invalid_argument("reward weights must sum to 1");
  }
  const size_t n_leaves = per_model_scores.front().size();
  for (const auto& row : per_model_scores) {
    if (row.size() != n_leaves) {
      throw std::invalid_argument("combine_multi_reward: ragged score rows");
    }
  }

  if (mode == MultiRewardMode::kAdvantageSum) {
    std::vector<double> combined(n_leaves, 0.0);
    for (size_t k = 0; k < per_model_scores.size(); ++k) {
      const std::vector<double> advs =
          leaf_advantages(per_model_scores[k], sigma_floor);
      for (size_t i = 0; i < n_leaves; ++i) combined[i] += weights[k] * advs[i];
    }
    return combined;
  }
  if (mode == MultiRewardMode::kRewardSum) {
    std::vector<double> aggregated(n_leaves, 0.0);
    for (size_t k = 0; k < per_model_scores.size(); ++k) {
      for (size_t i = 0; i < n_leaves; ++i) {
        aggregated[i] += weights[k] * per_model_scores[k][i];
      }
    }
    return leaf_advantages(aggregated, sigma_floor);
  }
  throw std::invalid_argument("combine_multi_reward: unknown mode");
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  std::vector<double> weights(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    weights[i] = std::exp(logits[i] - max_logit);
    sum += weights[i];
  }
  for (double& w : weights) w /= sum;
  return weights;
}

double effective_sample_size(std::span<const double> weights) {
  if (weights.empty()) throw std::invalid_argument("effective_sample_size: empty weights");
  double sum = 0.0, sum_sq = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("effective_sample_size: negative weight");
    sum += w;
    sum_sq += w * w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("effective_sample_size: weights must sum to 1");
  }
  return 1.0 / sum_sq;
}

void assign_leaf_advantages(tree::DenoiseTree& tree,
                            std::span<const double> advs) {
  if (advs.size() != tree.leaves.size()) {
    throw std::invalid_argument("assign_leaf_advantages: count mismatch");
  }
  for (size_t i = 0; i < advs.size(); ++i) {
    const int edge_id = tree.nodes[tree.leaves[i]].parent_edge;
    tree::TreeEdge& edge = tree.edges[edge_id];
    edge.advantage = advs[i];
    edge.has_advantage = true;
  }
}

void backup(tree::DenoiseTree& tree) {
  for (int leaf : tree.leaves) {
    if (!tree.edges[tree.nodes[leaf].parent_edge].has_advantage) {
      throw std::invalid_argument("backup: leaf advantage unset");
    }
  }
  // Node ids are assigned in creation order, so descending id order is a
  // reverse topological order.
  std::vector<double> logits;
  std::vector<double> child_advs;
  for (int id = static_cast<int>(tree.nodes.size()) - 1; id >= 0; --id) {
    const tree::TreeNode& node = tree.nodes[id];
    if (node.child_edges.empty() || node.parent_edge < 0) continue;
    logits.clear();
    child_advs.clear();
    for (int edge_id : node.child_edges) {
      const tree::TreeEdge& edge = tree.edges[edge_id];
      logits.push_back(edge.transition.logprob);
      child_advs.push_back(edge.advantage);
    }
    tree::TreeEdge& incoming = tree.edges[node.parent_edge];
    if (node.child_edges.size() == 1) {
      incoming.advantage = child_advs.front();  // continuation edge: identity
    } else {
      const std::vector<double> weights = softmax(logits);
      double value = 0.0;
      for (size_t i = 0; i < weights.size(); ++i) {
        value += weights[i] * child_advs[i];
      }
      incoming.advantage = value;
    }
    incoming.has_advantage = true;
  }
}

double mean_branching_ess(const tree::DenoiseTree& tree) {
  std::vector<double> logits;
  double total = 0.0;
  int count = 0;
  for (const tree::TreeNode& node : tree.nodes) {
    if (node.child_edges.size() < 2) continue;
    logits.clear();
    for (int edge_id : node.child_edges) {
      logits.push_back(tree.edges[edge_id].transition.logprob);
    }
    total += effective_sample_size(softmax(logits));
    ++count;
  }
  return count == 0 ? 0.0 : total / count;
}

}  // namespace treegrpo::advantage
