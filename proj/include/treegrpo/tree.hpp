#pragma once

/**
 * Sparse denoising search tree.
 *
 * Outside the SDE window every frontier node gets a single deterministic
 * (ODE) child, so all leaves share the prefix bit-for-bit. Inside the window
 * each frontier node spawns `branch` SDE children from one shared proposal;
 * each edge stores its transition and behavior log-probability. Advantages
 * are attached later by the advantage module.
 */

#include <cstdint>
#include <string>
#include <vector>

#include "treegrpo/sampler.hpp"

namespace treegrpo::tree {

struct TreeNode {
  int id = 0;
  int step = 0;                 // 0 at the root, schedule.steps at leaves
  std::vector<double> latent;
  int parent_edge = -1;         // -1 for the root
  std::vector<int> child_edges;
};

struct TreeEdge {
  int id = 0;
  int parent = 0;
  int child = 0;
  sampler::Transition transition;
  bool branching = false;       // true for SDE-window edges
  double advantage = 0.0;
  bool has_advantage = false;
};

struct DenoiseTree {
  int condition = 0;
  int branch = 1;
  int horizon = 0;              // T
  std::vector<int> window;      // sorted branching step indices
  std::vector<TreeNode> nodes;
  std::vector<TreeEdge> edges;
  std::vector<int> leaves;      // node ids in creation order

  const TreeNode& root() const { return nodes.front(); }
};

// Builds the tree from a shared root latent. Branching steps draw child
// noise from streams keyed by (parent node id, child index) under `stream`,
// so rebuilding with identical inputs reproduces the tree exactly.
// Requires: window within [0, T); sigma_k > 0 on window steps; branch >= 2
// when the window is non-empty.
DenoiseTree build_tree(const flow::VelocityModel& model, int condition,
                       std::span<const double> root_latent,
                       const sampler::Schedule& schedule,
                       const std::vector<int>& window, int branch,
                       rng::Stream stream);

struct TreeStats {
  long long eff_group = 0;  // leaves per prompt: trees * b^d
  long long eff_steps = 0;  // branching-internal nodes: trees * (b^d - 1)/(b - 1)
};

TreeStats tree_stats(int branch, int depth, int trees);

// Number of velocity-field forward evaluations spent building the tree:
// one per frontier node per step (children of one parent share a proposal).
long long nfe_count(const DenoiseTree& tree);

// Debug dump: nodes, edges, log-probs, advantages (schema in README).
std::string dump_json(const DenoiseTree& tree);

}  // namespace treegrpo::tree
