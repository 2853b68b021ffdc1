#include <doctest.h>

#include <stdexcept>

#include <nlohmann/json.hpp>

#include "treegrpo/tree.hpp"
#include "treegrpo/verification.hpp"

using namespace treegrpo;

namespace {

struct TreeSetup {
  flow::VelocityField model{2, 2, {16, 16}, 321};
  sampler::Schedule schedule = sampler::make_schedule(10, 0.02, 0.7);
  std::vector<double> seed_latent{0.25, -0.75};
};

int branching_internal_nodes(const tree::DenoiseTree& t) {
  int count = 0;
  for (const tree::TreeNode& n : t.nodes) {
    if (n.child_edges.size() >= 2) ++count;
  }
  return count;
}

}  // namespace

TEST_CASE("empty window degenerates to a single chain") {
  TreeSetup setup;
  const tree::DenoiseTree t =
      tree::build_tree(setup.model, 0, setup.seed_latent, setup.schedule, {},
                       1, rng::Stream(9));
  CHECK(t.leaves.size() == 1);
  CHECK(t.edges.size() == 10);
  CHECK(t.nodes.size() == 11);
  CHECK(tree::nfe_count(t) == 10);
  for (const tree::TreeEdge& e : t.edges) CHECK_FALSE(e.branching);
}

TEST_CASE("branching counts match the closed forms") {
  TreeSetup setup;
  SUBCASE("b=3, window of 3") {
    const tree::DenoiseTree t =
        tree::build_tree(setup.model, 0, setup.seed_latent, setup.schedule,
                         {4, 5, 6}, 3, rng::Stream(10));
    CHECK(t.leaves.size() == 27);
    CHECK(branching_internal_nodes(t) == 13);
  }
  SUBCASE("b=4, window of 3") {
    const tree::DenoiseTree t =
        tree::build_tree(setup.model, 0, setup.seed_latent, setup.schedule,
                         {3, 4, 5}, 4, rng::Stream(11));
    CHECK(t.leaves.size() == 64);
    CHECK(branching_internal_nodes(t) == 21);
  }
}

TEST_CASE("leaf counts match b^d across configurations") {
  TreeSetup setup;
  for (int b : {2, 3, 4}) {
    for (int d = 1; d <= 4; ++d) {
      std::vector<int> window;
      for (int k = 0; k < d; ++k) window.push_back(2 + k);
      const tree::DenoiseTree t =
          tree::build_tree(setup.model, 1, setup.seed_latent, setup.schedule,
                           window, b, rng::Stream(100 + b * 10 + d));
      const tree::TreeStats stats = tree::tree_stats(b, d, 1);
      CHECK(static_cast<long long>(t.leaves.size()) == stats.eff_group);
      CHECK(branching_internal_nodes(t) == stats.eff_steps);
    }
  }
}

TEST_CASE("tree_stats reproduces the reference rows") {
  auto check = [](int b, int d, int n, long long group, long long steps) {
    const tree::TreeStats s = tree::tree_stats(b, d, n);
    CHECK(s.eff_group == group);
    CHECK(s.eff_steps == steps);
  };
  check(3, 3, 1, 27, 13);
  check(3, 3, 2, 54, 26);
  check(2, 3, 1, 8, 7);
  check(2, 3, 2, 16, 14);
  check(2, 4, 1, 16, 15);
  check(4, 3, 1, 64, 21);
  check(2, 1, 1, 2, 1);
}

TEST_CASE("nfe accounting: prefix reuse vs independent trajectories") {
  TreeSetup setup;
  const tree::DenoiseTree t =
      tree::build_tree(setup.model, 0, setup.seed_latent, setup.schedule,
                       {4, 5, 6}, 3, rng::Stream(12));
  CHECK(tree::nfe_count(t) == 98);
  CHECK(verify::frontier_nfe_oracle(10, {4, 5, 6}, 3) == 98);
  // 27 independent full trajectories references the same leaf count
  CHECK(27 * 10 == 270);
  CHECK(tree::nfe_count(t) * 10 < 37 * 27);  // 98/270 < 0.37
}

TEST_CASE("leaves share the deterministic prefix bit-for-bit") {
  TreeSetup setup;
  const tree::DenoiseTree t =
      tree::build_tree(setup.model, 0, setup.seed_latent, setup.schedule,
                       {4, 5, 6}, 3, rng::Stream(13));
  // walk two distinct leaves to the root, recording latents per step
  auto path_latents = [&](int leaf) {
    std::vector<std::vector<double>> latents(11);
    int node = leaf;
    while (node >= 0) {
      latents[t.nodes[node].step] = t.nodes[node].latent;
      const int edge = t.nodes[node].parent_edge;
      node = edge < 0 ? -1 : t.edges[edge].parent;
    }
    return latents;
  };
  const auto first = path_latents(t.leaves.front());
  const auto last = path_latents(t.leaves.back());
  for (int step = 0; step <= 4; ++step) {  // window starts at 4
    CHECK(first[step] == last[step]);
  }
  CHECK(first[10] != last[10]);
}

TEST_CASE("rebuilding with identical inputs reproduces the tree") {
  TreeSetup setup;
  const tree::DenoiseTree a =
      tree::build_tree(setup.model, 1, setup.seed_latent, setup.schedule,
                       {2, 3}, 3, rng::Stream(77));
  const tree::DenoiseTree b =
      tree::build_tree(setup.model, 1, setup.seed_latent, setup.schedule,
                       {2, 3}, 3, rng::Stream(77));
  REQUIRE(a.nodes.size() == b.nodes.size());
  for (size_t i = 0; i < a.nodes.size(); ++i) {
    CHECK(a.nodes[i].latent == b.nodes[i].latent);
  }
  for (size_t i = 0; i < a.edges.size(); ++i) {
    CHECK(a.edges[i].transition.logprob == b.edges[i].transition.logprob);
  }
}

TEST_CASE("window steps with sigma = 0 are a configuration error") {
  TreeSetup setup;
  const sampler::Schedule deterministic = sampler::make_schedule(10, 0.02, 0.0);
  CHECK_THROWS_AS(
      tree::build_tree(setup.model, 0, setup.seed_latent, deterministic,
                       {4, 5}, 2, rng::Stream(1)),
      std::invalid_argument);
}

TEST_CASE("tree_stats validates its arguments") {
  CHECK_THROWS_AS(tree::tree_stats(1, 3, 1), std::invalid_argument);
  CHECK_THROWS_AS(tree::tree_stats(2, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(tree::tree_stats(2, 3, 0), std::invalid_argument);
}

TEST_CASE("json dump carries nodes, edges and log-probs") {
  TreeSetup setup;
  const tree::DenoiseTree t =
      tree::build_tree(setup.model, 0, setup.seed_latent, setup.schedule,
                       {5, 6}, 2, rng::Stream(31));
  const nlohmann::json j = nlohmann::json::parse(tree::dump_json(t));
  CHECK(j.at("nodes").size() == t.nodes.size());
  CHECK(j.at("edges").size() == t.edges.size());
  CHECK(j.at("window") == std::vector<int>{5, 6});
  CHECK(j.at("edges")[0].contains("logprob"));
}
