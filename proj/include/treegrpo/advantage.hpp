#pragma once

/**
 * Leaf advantages and leaf-to-root propagation.
 *
 * Leaf scores are z-scored within the prompt group (population std). The
 * backup pass then walks the tree bottom-up: each internal node's incoming
 * edge receives the softmax-weighted average of its child edges' advantages,
 * with the softmax taken over the stored behavior log-probabilities.
 * Single-child (continuation) edges copy their child's advantage unchanged.
 */

#include <span>
#include <vector>

#include "treegrpo/tree.hpp"

namespace treegrpo::advantage {

inline constexpr double kDefaultSigmaFloor = 1e-8;

// Group z-scores with population std. A degenerate group (all equal) maps to
// all zeros. Requires group size >= 2.
std::vector<double> leaf_advantages(std::span<const double> scores,
                                    double sigma_floor = kDefaultSigmaFloor);

enum class MultiRewardMode {
  kAdvantageSum,  // z-score per model, then weighted sum
  kRewardSum,     // weighted sum of raw scores, then one z-score
};

// per_model_scores: one row per reward model, each row one value per leaf.
// Weights are nonnegative and sum to 1.
std::vector<double> combine_multi_reward(
    const std::vector<std::vector<double>>& per_model_scores,
    std::span<const double> weights, MultiRewardMode mode,
    double sigma_floor = kDefaultSigmaFloor);

// Numerically stable softmax (max subtraction).
std::vector<double> softmax(std::span<const double> logits);

// 1 / sum(w^2) for nonnegative weights summing to 1.
double effective_sample_size(std::span<const double> weights);

// Writes `advs` (one per leaf, in tree.leaves order) onto each leaf's
// incoming edge.
void assign_leaf_advantages(tree::DenoiseTree& tree,
                            std::span<const double> advs);

// Post-order backup; fills every remaining edge advantage. Throws if any
// leaf edge advantage is unset.
void backup(tree::DenoiseTree& tree);

// Mean ESS of the softmax weights over branching nodes (diagnostic; the
// tree's single-child nodes contribute nothing).
double mean_branching_ess(const tree::DenoiseTree& tree);

}  // namespace treegrpo::advantage
