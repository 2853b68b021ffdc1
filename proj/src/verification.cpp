#include "treegrpo/verification.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "treegrpo/advantage.hpp"
#include "treegrpo/grpo.hpp"
#include "treegrpo/window.hpp"

namespace treegrpo::verify {

namespace {

// Definition-level recursion: value of a node is its leaf advantage at a
// leaf, else the softmax-weighted average of its children's edge values.
double node_value(const tree::DenoiseTree& t, int node_id,
                  std::vector<double>& out) {
  const tree::TreeNode& node = t.nodes[node_id];
  if (node.child_edges.empty()) {
    return t.edges[node.parent_edge].advantage;
  }
  std::vector<double> logits;
  std::vector<double> values;
  for (int edge_id : node.child_edges) {
    const tree::TreeEdge& edge = t.edges[edge_id];
    const double v = node_value(t, edge.child, out);
    out[edge_id] = v;
    logits.push_back(edge.transition.logprob);
    values.push_back(v);
  }
  double max_logit = logits.front();
  for (double l : logits) max_logit = std::max(max_logit, l);
  double norm = 0.0, acc = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    const double w = std::exp(logits[i] - max_logit);
    norm += w;
    acc += w * values[i];
  }
  return acc / norm;
}

}  // namespace

std::vector<double> backup_oracle(const tree::DenoiseTree& tree) {
  for (int leaf : tree.leaves) {
    if (!tree.edges[tree.nodes[leaf].parent_edge].has_advantage) {
      throw std::invalid_argument("backup_oracle: leaf advantage unset");
    }
  }
  std::vector<double> advantages(tree.edges.size(), 0.0);
  for (int leaf : tree.leaves) {
    const int edge_id = tree.nodes[leaf].parent_edge;
    advantages[edge_id] = tree.edges[edge_id].advantage;
  }
  node_value(tree, tree.root().id, advantages);
  return advantages;
}

double finite_diff_coord(const LossFn& fn, std::span<const double> params,
                         size_t coord, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff: step must be > 0");
  std::vector<double> work(params.begin(), params.end());
  work[coord] = params[coord] + step;
  const double up = fn(work);
  work[coord] = params[coord] - step;
  const double down = fn(work);
  return (up - down) / (2.0 * step);
}

std::vector<double> finite_diff_grad(const LossFn& fn,
                                     std::span<const double> params,
                                     double step) {
  std::vector<double> grad(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    grad[i] = finite_diff_coord(fn, params, i, step);
  }
  return grad;
}

VarianceProbeResult variance_probe(std::span<const double> weights,
                                   double sigma_env, int trials,
                                   rng::Stream stream) {
  if (trials < 10000) {
    throw std::invalid_argument("variance_probe: need at least 1e4 trials");
  }
  double sum = 0.0, sum_sq = 0.0;
  for (int t = 0; t < trials; ++t) {
    double estimator = 0.0;
    for (double w : weights) estimator += w * sigma_env * stream.normal();
    sum += estimator;
    sum_sq += estimator * estimator;
  }
  const double n = static_cast<double>(trials);
  const double mean = sum / n;
  VarianceProbeResult result;
  result.empirical = sum_sq / n - mean * mean;
  double w_sq = 0.0;
  for (double w : weights) w_sq += w * w;
  result.predicted = sigma_env * sigma_env * w_sq;
  return result;
}

// ============================================================================
// Analytic Gaussian flow
// ============================================================================

AnalyticGaussianField::AnalyticGaussianField(std::vector<double> mean,
                                             double std_dev)
    : mean_(std::move(mean)), std_dev_(std_dev) {
  if (!(std_dev > 0.0)) {
    throw std::invalid_argument("analytic field: std must be > 0");
  }
}

void AnalyticGaussianField::velocity(std::span<const double> x, double tau,
                                     int /*condition*/,
                                     std::span<double> out) const {
  // v(x, tau) = E[x1 - x0 | x_tau = x] for x0 ~ N(m, s^2), x1 ~ N(0, 1):
  //   v = (tau - (1 - tau) s^2) / Var * (x - (1 - tau) m) - m
  const double alpha = 1.0 - tau;
  const double var = marginal_var(tau);
  const double slope = (tau - alpha * std_dev_ * std_dev_) / var;
  for (size_t i = 0; i < mean_.size(); ++i) {
    out[i] = slope * (x[i] - alpha * mean_[i]) - mean_[i];
  }
}

double AnalyticGaussianField::marginal_mean(size_t i, double tau) const {
  return (1.0 - tau) * mean_[i];
}

double AnalyticGaussianField::marginal_var(double tau) const {
  const double alpha = 1.0 - tau;
  return alpha * alpha * std_dev_ * std_dev_ + tau * tau;
}

std::vector<double> AnalyticGaussianField::marginal_score(
    std::span<const double> x, double tau) const {
  const double var = marginal_var(tau);
  std::vector<double> score(mean_.size());
  for (size_t i = 0; i < mean_.size(); ++i) {
    score[i] = -(x[i] - marginal_mean(i, tau)) / var;
  }
  return score;
}

double AnalyticGaussianField::marginal_logpdf(std::span<const double> x,
                                              double tau) const {
  const double var = marginal_var(tau);
  double quad = 0.0;
  for (size_t i = 0; i < mean_.size(); ++i) {
    const double d = x[i] - marginal_mean(i, tau);
    quad += d * d;
  }
  const double dim = static_cast<double>(mean_.size());
  return -0.5 * dim * std::log(2.0 * M_PI * var) - 0.5 * quad / var;
}

double energy_distance(const std::vector<std::vector<double>>& a,
                       const std::vector<std::vector<double>>& b) {
  if (a.empty() || b.empty()) {
    throw std::invalid_argument("energy_distance: empty sample set");
  }
  auto dist = [](const std::vector<double>& p, const std::vector<double>& q) {
    double sq = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
      const double d = p[i] - q[i];
      sq += d * d;
    }
    return std::sqrt(sq);
  };
  double cross = 0.0;
  for (const auto& p : a)
    for (const auto& q : b) cross += dist(p, q);
  cross /= static_cast<double>(a.size()) * static_cast<double>(b.size());

  double within_a = 0.0;
  for (const auto& p : a)
    for (const auto& q : a) within_a += dist(p, q);
  within_a /= static_cast<double>(a.size()) * static_cast<double>(a.size());

  double within_b = 0.0;
  for (const auto& p : b)
    for (const auto& q : b) within_b += dist(p, q);
  within_b /= static_cast<double>(b.size()) * static_cast<double>(b.size());

  return std::sqrt(std::max(0.0, 2.0 * cross - within_a - within_b));
}

long long frontier_nfe_oracle(int horizon, const std::vector<int>& window,
                              int branch) {
  long long frontier = 1;
  long long total = 0;
  for (int k = 0; k < horizon; ++k) {
    total += frontier;
    if (std::find(window.begin(), window.end(), k) != window.end()) {
      frontier *= branch;
    }
  }
  return total;
}

// ============================================================================
// Self-check suite (`verify` subcommand)
// ============================================================================

namespace {

struct CheckTable {
  std::ostream& os;
  bool all_passed = true;

  void report(const char* name, bool passed, const std::string& detail) {
    char line[256];
    std::snprintf(line, sizeof(line), "[%s] %-34s %s", passed ? "PASS" : "FAIL",
                  name, detail.c_str());
    os << line << "\n";
    all_passed = all_passed && passed;
  }
};

std::string fmt(const char* format, double a, double b) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), format, a, b);
  return buf;
}

// Synthetic tree with random structure and values; latents are irrelevant to
// the backup math.
tree::DenoiseTree random_value_tree(int branch, int depth, int chain_prefix,
                                    int chain_suffix, rng::Stream& stream) {
  tree::DenoiseTree t;
  t.branch = branch;
  t.horizon = chain_prefix + depth + chain_suffix;
  for (int k = 0; k < depth; ++k) t.window.push_back(chain_prefix + k);

  tree::TreeNode root;
  root.id = 0;
  root.step = 0;
  t.nodes.push_back(root);
  std::vector<int> frontier{0};
  for (int step = 0; step < t.horizon; ++step) {
    const bool branching = step >= chain_prefix && step < chain_prefix + depth;
    const int fanout = branching ? branch : 1;
    std::vector<int> next;
    for (int node_id : frontier) {
      for (int j = 0; j < fanout; ++j) {
        tree::TreeNode child;
        child.id = static_cast<int>(t.nodes.size());
        child.step = step + 1;
        tree::TreeEdge edge;
        edge.id = static_cast<int>(t.edges.size());
        edge.parent = node_id;
        edge.child = child.id;
        edge.branching = branching;
        edge.transition.step = step;
        edge.transition.std_dev = branching ? 1.0 : 0.0;
        edge.transition.logprob = branching ? -5.0 * stream.uniform01() : 0.0;
        child.parent_edge = edge.id;
        t.nodes[node_id].child_edges.push_back(edge.id);
        next.push_back(child.id);
        t.nodes.push_back(child);
        t.edges.push_back(edge);
      }
    }
    frontier = next;
  }
  t.leaves = frontier;
  std::vector<double> advs(t.leaves.size());
  for (double& a : advs) a = -3.0 + 6.0 * stream.uniform01();
  advantage::assign_leaf_advantages(t, advs);
  return t;
}

}  // namespace

bool run_verification_suite(std::ostream& os) {
  CheckTable table{os};
  rng::Stream stream(0x5eedULL);

  {  // tree combinatorics against the closed forms
    bool ok = true;
    const int cases[][4] = {{3, 3, 1, 0}, {3, 3, 2, 0}, {2, 3, 1, 0},
                            {2, 3, 2, 0}, {2, 4, 1, 0}, {4, 3, 1, 0}};
    const long long expected[][2] = {{27, 13}, {54, 26}, {8, 7},
                                     {16, 14}, {16, 15}, {64, 21}};
    for (int i = 0; i < 6; ++i) {
      const tree::TreeStats s =
          tree::tree_stats(cases[i][0], cases[i][1], cases[i][2]);
      ok = ok && s.eff_group == expected[i][0] && s.eff_steps == expected[i][1];
    }
    table.report("tree combinatorics", ok, ok ? "6/6 rows" : "row mismatch");
  }

  {  // production backup vs recursive oracle
    double max_dev = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const int branch = 2 + static_cast<int>(stream.next_u64() % 3);
      const int depth = 1 + static_cast<int>(stream.next_u64() % 4);
      tree::DenoiseTree t = random_value_tree(branch, depth, 2, 2, stream);
      advantage::backup(t);
      const std::vector<double> oracle = backup_oracle(t);
      for (const tree::TreeEdge& e : t.edges) {
        max_dev = std::max(max_dev, std::abs(e.advantage - oracle[e.id]));
      }
    }
    table.report("backup vs recursive oracle", max_dev < 1e-9,
                 fmt("max dev %.2e (< %.0e)", max_dev, 1e-9));
  }

  {  // window mass function
    const std::vector<double> pmf = window::window_start_pmf(10, 3, 0.5);
    double total = 0.0;
    for (double p : pmf) total += p;
    const double expected = 0.5 / (1.0 - std::pow(0.5, 7));
    const bool ok = std::abs(total - 1.0) < 1e-12 &&
                    std::abs(pmf[0] - expected) < 1e-12;
    table.report("window start law", ok,
                 fmt("Pr[0] = %.6f, sum = %.12f", pmf[0], total));
  }

  {  // finite differences on a quadratic
    auto quadratic = [](std::span<const double> p) {
      double acc = 0.0;
      for (double v : p) acc += 0.5 * v * v;
      return acc;
    };
    std::vector<double> point{0.3, -1.2, 2.5};
    const std::vector<double> grad = finite_diff_grad(quadratic, point, 1e-5);
    double max_err = 0.0;
    for (size_t i = 0; i < point.size(); ++i) {
      max_err = std::max(max_err, std::abs(grad[i] - point[i]));
    }
    table.report("finite-diff on quadratic", max_err < 1e-8,
                 fmt("max err %.2e (< %.0e)", max_err, 1e-8));
  }

  {  // fm_loss gradient
    flow::VelocityField model(2, 2, {16, 16}, 77);
    flow::SyntheticTask task = flow::make_task(2);
    rng::Stream data(123);
    std::vector<flow::InterpolantPair> batch(8);
    for (auto& pair : batch) {
      pair.condition = static_cast<int>(data.next_u64() % 2);
      pair.x0.resize(2);
      pair.x1.resize(2);
      task.sample_data(pair.condition, data, pair.x0);
      for (double& v : pair.x1) v = data.normal();
      pair.t = data.uniform01();
    }
    const flow::FmLossResult analytic = flow::fm_loss(model, batch);
    auto loss_at = [&](std::span<const double> p) {
      flow::VelocityField probe = model;
      std::copy(p.begin(), p.end(), probe.params().begin());
      return flow::fm_loss(probe, batch).loss;
    };
    double max_rel = 0.0;
    for (int i = 0; i < 40; ++i) {
      const size_t coord = stream.next_u64() % model.param_count();
      const double fd = finite_diff_coord(loss_at, model.params(), coord, 1e-5);
      const double an = analytic.grad[coord];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      max_rel = std::max(max_rel, std::abs(fd - an) / denom);
    }
    table.report("fm_loss gradient", max_rel < 1e-4,
                 fmt("max rel err %.2e (< %.0e)", max_rel, 1e-4));
  }

  {  // grpo_loss gradient
    flow::VelocityField model(2, 2, {16, 16}, 78);
    flow::VelocityField old_model = model;
    rng::Stream perturb(5);
    for (double& p : old_model.params()) p += 0.01 * perturb.normal();
    const sampler::Schedule schedule = sampler::make_schedule(10, 0.02, 0.7);
    grpo::EdgeBatch batch;
    rng::Stream sde(9);
    for (int i = 0; i < 6; ++i) {
      std::vector<double> x{sde.normal(), sde.normal()};
      const int k = 3 + i % 3;
      sampler::Transition t =
          sampler::sde_step(old_model, x, k, i % 2, schedule, sde);
      batch.push_back({std::move(t), sde.normal()});
    }
    const grpo::GrpoLossResult analytic =
        grpo::grpo_loss(model, batch, 0.2, schedule);
    auto loss_at = [&](std::span<const double> p) {
      flow::VelocityField probe = model;
      std::copy(p.begin(), p.end(), probe.params().begin());
      return grpo::grpo_loss(probe, batch, 0.2, schedule).loss;
    };
    double max_rel = 0.0;
    for (int i = 0; i < 40; ++i) {
      const size_t coord = stream.next_u64() % model.param_count();
      const double fd = finite_diff_coord(loss_at, model.params(), coord, 1e-5);
      const double an = analytic.grad[coord];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      max_rel = std::max(max_rel, std::abs(fd - an) / denom);
    }
    table.report("grpo_loss gradient", max_rel < 1e-4,
                 fmt("max rel err %.2e (< %.0e)", max_rel, 1e-4));
  }

  {  // variance probe at the two reference weight vectors
    const VarianceProbeResult uneven =
        variance_probe(std::vector<double>{0.25, 0.75}, 1.0, 100000,
                       stream.child(11));
    const VarianceProbeResult even = variance_probe(
        std::vector<double>{0.25, 0.25, 0.25, 0.25}, 1.0, 100000,
        stream.child(12));
    const double dev_uneven =
        std::abs(uneven.empirical / uneven.predicted - 1.0);
    const double dev_even = std::abs(even.empirical / even.predicted - 1.0);
    const bool ok = dev_uneven < 0.1 && dev_even < 0.1;
    table.report("variance probe", ok,
                 fmt("rel dev %.3f / %.3f (< 0.1)", dev_uneven, dev_even));
  }

  {  // analytic score identity through score_estimate
    AnalyticGaussianField field({0.4, -0.9}, 0.6);
    double max_err = 0.0;
    for (double tau : {0.1, 0.3, 0.5, 0.8, 1.0}) {
      for (int i = 0; i < 10; ++i) {
        std::vector<double> x{2.0 * stream.normal(), 2.0 * stream.normal()};
        const std::vector<double> estimated =
            flow::score_estimate(field, x, tau, 0);
        const std::vector<double> exact = field.marginal_score(x, tau);
        for (size_t d = 0; d < x.size(); ++d) {
          max_err = std::max(max_err, std::abs(estimated[d] - exact[d]));
        }
      }
    }
    table.report("score estimator vs analytic", max_err < 1e-9,
                 fmt("max err %.2e (< %.0e)", max_err, 1e-9));
  }

  {  // NFE frontier accounting
    const long long oracle = frontier_nfe_oracle(10, {4, 5, 6}, 3);
    flow::VelocityField model(2, 2, {8}, 3);
    const sampler::Schedule schedule = sampler::make_schedule(10, 0.02, 0.7);
    std::vector<double> seed_latent{0.1, -0.2};
    tree::DenoiseTree t = tree::build_tree(model, 0, seed_latent, schedule,
                                           {4, 5, 6}, 3, stream.child(13));
    const bool ok = oracle == 98 && tree::nfe_count(t) == oracle;
    table.report("nfe accounting", ok,
                 fmt("tree %.0f vs oracle %.0f",
                     static_cast<double>(tree::nfe_count(t)),
                     static_cast<double>(oracle)));
  }

  return table.all_passed;
}

}  // namespace treegrpo::verify
