#include "treegrpo/tree.hpp"

#include <algorithm>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace treegrpo::tree {

DenoiseTree build_tree(const flow::VelocityModel& model, int condition,
                       std::span<const double> root_latent,
                       const sampler::Schedule& schedule,
                       const std::vector<int>& window, int branch,
                       rng::Stream stream) {
  const int T = schedule.steps;
  std::vector<int> sorted_window = window;
  std::sort(sorted_window.begin(), sorted_window.end());
  for (int k : sorted_window) {
    if (k < 0 || k >= T) {
      throw std::invalid_argument("window step outside horizon");
    }
    if (!(schedule.sigmas[k] > 0.0)) {
      throw std::invalid_argument("window step has sigma = 0; configure noise_coeff > 0");
    }
  }
  if (!sorted_window.empty() && branch < 2) {
    throw std::invalid_argument("branch factor must be >= 2 on window steps");
  }

  DenoiseTree t;
  t.condition = condition;
  t.branch = branch;
  t.horizon = T;
  t.window = sorted_window;

  TreeNode root;
  root.id = 0;
  root.step = 0;
  root.latent.assign(root_latent.begin(), root_latent.end());
  t.nodes.push_back(std::move(root));

  std::vector<int> frontier{0};
  std::vector<int> next_frontier;
  for (int k = 0; k < T; ++k) {
    const bool in_window = std::binary_search(sorted_window.begin(),
                                              sorted_window.end(), k);
    next_frontier.clear();
    for (int node_id : frontier) {
      const std::vector<double> x = t.nodes[node_id].latent;
      if (in_window) {
        const sampler::GaussianProposal proposal =
            sampler::sde_proposal(model, x, k, condition, schedule);
        for (int j = 0; j < branch; ++j) {
          rng::Stream child_stream = stream.child(
              rng::stream_label::kBranch, static_cast<uint64_t>(node_id),
              static_cast<uint64_t>(j));
          sampler::Transition tr = sampler::sample_transition(
              proposal, x, k, condition, child_stream);

          TreeNode child;
          child.id = static_cast<int>(t.nodes.size());
          child.step = k + 1;
          child.latent = tr.child;

          TreeEdge edge;
          edge.id = static_cast<int>(t.edges.size());
          edge.parent = node_id;
          edge.child = child.id;
          edge.branching = true;
          edge.transition = std::move(tr);

          child.parent_edge = edge.id;
          t.nodes[node_id].child_edges.push_back(edge.id);
          next_frontier.push_back(child.id);
          t.nodes.push_back(std::move(child));
          t.edges.push_back(std::move(edge));
        }
      } else {
        std::vector<double> next = sampler::ode_step(model, x, k, condition,
                                                     schedule);
        sampler::Transition tr;
        tr.source = x;
        tr.child = next;
        tr.step = k;
        tr.condition = condition;
        tr.mean = next;
        tr.std_dev = 0.0;    // deterministic
        tr.logprob = 0.0;    // log of probability one

        TreeNode child;
        child.id = static_cast<int>(t.nodes.size());
        child.step = k + 1;
        child.latent = std::move(next);

        TreeEdge edge;
        edge.id = static_cast<int>(t.edges.size());
        edge.parent = node_id;
        edge.child = child.id;
        edge.branching = false;
        edge.transition = std::move(tr);

        child.parent_edge = edge.id;
        t.nodes[node_id].child_edges.push_back(edge.id);
        next_frontier.push_back(child.id);
        t.nodes.push_back(std::move(child));
        t.edges.push_back(std::move(edge));
      }
    }
    frontier = next_frontier;
  }
  t.leaves = frontier;
  return t;
}

TreeStats tree_stats(int branch, int depth, int trees) {
  if (branch < 2) throw std::invalid_argument("tree_stats: branch must be >= 2");
  if (depth < 1) throw std::invalid_argument("tree_stats: depth must be >= 1");
  if (trees < 1) throw std::invalid_argument("tree_stats: trees must be >= 1");
  long long leaves = 1;
  for (int i = 0; i < depth; ++i) leaves *= branch;
  TreeStats s;
  s.eff_group = static_cast<long long>(trees) * leaves;
  s.eff_steps = static_cast<long long>(trees) * ((leaves - 1) / (branch - 1));
  return s;
}

long long nfe_count(const DenoiseTree& tree) {
  // Every non-leaf node was expanded with exactly one velocity evaluation.
  long long count = 0;
  for (const TreeNode& node : tree.nodes) {
    if (node.step < tree.horizon) ++count;
  }
  return count;
}

std::string dump_json(const DenoiseTree& tree) {
  nlohmann::json j;
  j["condition"] = tree.condition;
  j["branch"] = tree.branch;
  j["horizon"] = tree.horizon;
  j["window"] = tree.window;
  j["leaves"] = tree.leaves;
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (const TreeNode& n : tree.nodes) {
    nodes.push_back({{"id", n.id},
                     {"step", n.step},
                     {"latent", n.latent},
                     {"parent_edge", n.parent_edge}});
  }
  auto& edges = j["edges"] = nlohmann::json::array();
  for (const TreeEdge& e : tree.edges) {
    nlohmann::json je = {{"id", e.id},
                         {"parent", e.parent},
                         {"child", e.child},
                         {"branching", e.branching},
                         {"logprob", e.transition.logprob}};
    if (e.has_advantage) je["advantage"] = e.advantage;
    edges.push_back(std::move(je));
  }
  return j.dump(2);
}

}  // namespace treegrpo::tree
