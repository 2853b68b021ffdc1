#include "treegrpo/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <stdexcept>

namespace treegrpo::harness {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

window::WindowPlan plan_window(const config::RunConfig& cfg, int epoch,
                               rng::Stream& stream) {
  switch (cfg.strategy) {
    case window::Strategy::kRandom:
      return window::random_window(epoch, cfg.horizon, cfg.depth,
                                   cfg.geometric_r, stream);
    case window::Strategy::kShifting:
      return window::shifting_window(epoch, cfg.horizon, cfg.depth, cfg.stride);
    case window::Strategy::kFixed:
      return window::fixed_window(epoch, cfg.horizon, cfg.depth,
                                  cfg.fixed_start);
  }
  throw std::logic_error("unreachable window strategy");
}

// Raw scores per model (rows) over a set of terminal samples.
std::vector<std::vector<double>> score_matrix(
    const RewardBank& bank, const std::vector<std::vector<double>>& samples,
    int condition) {
  std::vector<std::vector<double>> rows(bank.models.size());
  for (auto& row : rows) row.reserve(samples.size());
  for (const std::vector<double>& sample : samples) {
    for (size_t k = 0; k < bank.models.size(); ++k) {
      rows[k].push_back(bank.models[k]->score(sample, condition));
    }
  }
  return rows;
}

std::vector<double> leaf_advantages_for_group(
    const config::RunConfig& cfg, const RewardBank& bank,
    const std::vector<std::vector<double>>& raw_rows) {
  const std::vector<double> weights = bank.weights();
  if (cfg.reward_mode == advantage::MultiRewardMode::kRewardSum &&
      cfg.standardize_rewards) {
    // Algorithm-style path: standardize each model by its running stats
    // before the weighted sum and single group normalization.
    std::vector<std::vector<double>> standardized = raw_rows;
    for (size_t k = 0; k < standardized.size(); ++k) {
      for (double& v : standardized[k]) v = bank.stats[k].standardize(v);
    }
    return advantage::combine_multi_reward(standardized, weights,
                                           advantage::MultiRewardMode::kRewardSum,
                                           cfg.sigma_floor);
  }
  return advantage::combine_multi_reward(raw_rows, weights, cfg.reward_mode,
                                         cfg.sigma_floor);
}

}  // namespace

RewardBank RewardBank::from_config(const config::RunConfig& cfg) {
  RewardBank bank;
  bank.specs = cfg.reward_specs;
  const flow::SyntheticTask task = cfg.task();
  for (const rewards::RewardSpec& spec : cfg.reward_specs) {
    bank.models.push_back(rewards::make_reward(spec.name, task, cfg.ring_radius));
    rewards::RewardStats stats;
    stats.decay = cfg.stats_decay;
    stats.sigma_floor = std::max(cfg.sigma_floor, 1e-12);
    bank.stats.push_back(stats);
  }
  return bank;
}

std::vector<double> RewardBank::weights() const {
  std::vector<double> w;
  w.reserve(specs.size());
  for (const rewards::RewardSpec& spec : specs) w.push_back(spec.weight);
  return w;
}

std::vector<double> RewardBank::score_all(std::span<const double> sample,
                                          int condition) const {
  std::vector<double> scores;
  scores.reserve(models.size());
  for (const auto& model : models) scores.push_back(model->score(sample, condition));
  return scores;
}

std::vector<double> evaluate(const flow::VelocityModel& model,
                             const RewardBank& bank,
                             std::span<const int> prompts,
                             int samples_per_prompt,
                             const sampler::Schedule& schedule, uint64_t seed) {
  if (samples_per_prompt < 1) {
    throw std::invalid_argument("evaluate: samples_per_prompt must be >= 1");
  }
  if (prompts.empty()) throw std::invalid_argument("evaluate: empty prompt set");

  const rng::Stream root(seed);
  std::vector<double> sums(bank.models.size(), 0.0);
  long long count = 0;
  std::vector<double> x0(static_cast<size_t>(model.data_dim()));
  for (const int prompt : prompts) {
    for (int s = 0; s < samples_per_prompt; ++s) {
      // keyed by (prompt, sample): independent of iteration order
      rng::Stream stream = root.child(rng::stream_label::kEval,
                                      static_cast<uint64_t>(prompt),
                                      static_cast<uint64_t>(s));
      for (double& v : x0) v = stream.normal();
      const std::vector<double> terminal =
          sampler::ode_rollout(model, x0, prompt, schedule);
      const std::vector<double> scores = bank.score_all(terminal, prompt);
      for (size_t k = 0; k < sums.size(); ++k) sums[k] += scores[k];
      ++count;
    }
  }
  for (double& s : sums) s /= static_cast<double>(count);
  return sums;
}

flow::VelocityField prepare_model(const config::RunConfig& cfg) {
  if (!cfg.checkpoint_path.empty()) {
    return flow::VelocityField::load(cfg.checkpoint_path);
  }
  flow::VelocityField model(cfg.data_dim, cfg.num_conditions, cfg.hidden,
                            rng::mix(cfg.pretrain_seed, rng::stream_label::kInit));
  const flow::PretrainResult result =
      flow::pretrain(model, cfg.task(), cfg.pretrain,
                     rng::Stream(cfg.pretrain_seed).child(rng::stream_label::kPretrain));
  if (result.holdout_loss > cfg.pretrain.holdout_loss_threshold) {
    throw std::runtime_error("pretraining failed to reach the held-out loss threshold");
  }
  return model;
}

TrainResult run_training(const config::RunConfig& cfg,
                         const flow::VelocityField& initial) {
  const Clock::time_point start = Clock::now();
  const sampler::Schedule schedule =
      sampler::make_schedule(cfg.horizon, cfg.tau_min, cfg.noise_coeff);
  RewardBank bank = RewardBank::from_config(cfg);
  const rng::Stream root(cfg.seed);

  grpo::PolicyPair pair(initial);
  grpo::PolicyUpdater updater(cfg.update);

  TrainResult result{initial, {}, {}};
  result.log.method =
      cfg.method == config::Method::kTreeGrpo ? "treegrpo" : "trajectory_grpo";
  for (const rewards::RewardSpec& spec : cfg.reward_specs) {
    result.log.reward_names.push_back(spec.name);
    result.summary.reward_names.push_back(spec.name);
    result.summary.reward_weights.push_back(spec.weight);
    result.summary.reward_rmax.push_back(spec.r_max);
  }
  result.summary.method = result.log.method;
  result.summary.seed = cfg.seed;
  result.summary.baseline_eval =
      evaluate(initial, bank, cfg.prompts, cfg.eval_samples, schedule,
               rng::mix(cfg.seed, rng::stream_label::kEval));

  long long cum_nfe = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    runlog::Record record;
    record.epoch = epoch;

    grpo::EdgeBatch edge_batch;
    std::vector<double> raw_all;          // pooled per model, for stats/logging
    std::vector<std::vector<double>> raw_pooled(bank.models.size());
    double ess_sum = 0.0;
    int ess_count = 0;

    if (cfg.method == config::Method::kTreeGrpo) {
      rng::Stream window_stream =
          root.child(rng::stream_label::kWindow, static_cast<uint64_t>(epoch));
      const window::WindowPlan plan = plan_window(cfg, epoch, window_stream);
      record.window_start = plan.start;
      const std::vector<int> window_steps = plan.steps();

      for (size_t pi = 0; pi < cfg.prompts.size(); ++pi) {
        const int prompt = cfg.prompts[pi];
        std::vector<tree::DenoiseTree> trees;
        std::vector<std::vector<double>> group_terminals;
        for (int ti = 0; ti < cfg.trees_per_prompt; ++ti) {
          rng::Stream seed_stream = root.child(
              rng::stream_label::kTreeSeed,
              rng::mix(static_cast<uint64_t>(epoch), static_cast<uint64_t>(prompt)),
              static_cast<uint64_t>(ti));
          std::vector<double> root_latent(static_cast<size_t>(cfg.data_dim));
          for (double& v : root_latent) v = seed_stream.normal();
          tree::DenoiseTree t =
              tree::build_tree(pair.behavior, prompt, root_latent, schedule,
                               window_steps, cfg.branch, seed_stream.child(1));
          cum_nfe += tree::nfe_count(t);
          for (int leaf : t.leaves) {
            group_terminals.push_back(t.nodes[leaf].latent);
          }
          trees.push_back(std::move(t));
        }

        const std::vector<std::vector<double>> raw_rows =
            score_matrix(bank, group_terminals, prompt);
        for (size_t k = 0; k < raw_rows.size(); ++k) {
          raw_pooled[k].insert(raw_pooled[k].end(), raw_rows[k].begin(),
                               raw_rows[k].end());
        }
        const std::vector<double> advs =
            leaf_advantages_for_group(cfg, bank, raw_rows);

        const size_t leaves_per_tree = trees.front().leaves.size();
        for (size_t ti = 0; ti < trees.size(); ++ti) {
          tree::DenoiseTree& t = trees[ti];
          const std::span<const double> slice(advs.data() + ti * leaves_per_tree,
                                              leaves_per_tree);
          advantage::assign_leaf_advantages(t, slice);
          advantage::backup(t);
          ess_sum += advantage::mean_branching_ess(t);
          ++ess_count;
          for (const tree::TreeEdge& edge : t.edges) {
            if (edge.branching) {
              edge_batch.push_back({edge.transition, edge.advantage});
            }
          }
        }
      }
    } else {
      record.window_start = -1;
      for (size_t pi = 0; pi < cfg.prompts.size(); ++pi) {
        const int prompt = cfg.prompts[pi];
        rng::Stream stream = root.child(
            rng::stream_label::kTrajectory,
            rng::mix(static_cast<uint64_t>(epoch), static_cast<uint64_t>(prompt)));
        baseline::TrajectoryBatch batch = baseline::trajectory_collect(
            pair.behavior, prompt, cfg.baseline_group, schedule, stream);
        cum_nfe += batch.nfe;

        const std::vector<std::vector<double>> raw_rows =
            score_matrix(bank, batch.terminals, prompt);
        for (size_t k = 0; k < raw_rows.size(); ++k) {
          raw_pooled[k].insert(raw_pooled[k].end(), raw_rows[k].begin(),
                               raw_rows[k].end());
        }
        batch.advantages = leaf_advantages_for_group(cfg, bank, raw_rows);
        const grpo::EdgeBatch edges = baseline::to_edge_batch(batch);
        edge_batch.insert(edge_batch.end(), edges.begin(), edges.end());
      }
    }

    // running statistics feed the standardized log columns (and the
    // reward_sum + standardize advantage path on the next epoch)
    record.rewards.resize(bank.models.size());
    for (size_t k = 0; k < bank.models.size(); ++k) {
      rewards::update_stats(bank.stats[k], raw_pooled[k]);
      double mean = 0.0, best = raw_pooled[k].front();
      for (double v : raw_pooled[k]) {
        mean += v;
        best = std::max(best, v);
      }
      mean /= static_cast<double>(raw_pooled[k].size());
      record.rewards[k].raw_mean = mean;
      record.rewards[k].raw_max = best;
      record.rewards[k].std_mean = bank.stats[k].standardize(mean);
    }
    record.mean_ess = ess_count == 0 ? 0.0 : ess_sum / ess_count;

    for (int inner = 0; inner < cfg.update.inner_epochs; ++inner) {
      const grpo::UpdateMetrics metrics =
          updater.update(pair.policy, edge_batch, schedule);
      if (inner == 0) {
        record.loss = metrics.loss;
        record.clip_fraction = metrics.clip_fraction;
        record.grad_norm = metrics.grad_norm;
      }
    }
    if ((epoch + 1) % cfg.update.refresh_cadence == 0) {
      grpo::refresh_behavior(pair);
    }

    record.cum_nfe = cum_nfe;
    record.wall_seconds = seconds_since(start);
    result.log.records.push_back(std::move(record));

    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      std::filesystem::create_directories(cfg.out_dir);
      pair.policy.save(std::filesystem::path(cfg.out_dir) /
                       ("model_epoch_" + std::to_string(epoch + 1) + ".ckpt"));
    }

    if (cfg.nfe_budget > 0 && cum_nfe >= cfg.nfe_budget) break;
  }

  result.model = pair.policy;
  result.summary.final_eval =
      evaluate(result.model, bank, cfg.prompts, cfg.eval_samples, schedule,
               rng::mix(cfg.seed, rng::stream_label::kEval));
  result.summary.total_nfe = cum_nfe;
  result.summary.wall_seconds = seconds_since(start);
  return result;
}

void persist_run(const TrainResult& result, const config::RunConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  const fs::path dir(cfg.out_dir);
  result.model.save(dir / "model_final.ckpt");
  result.log.save_csv((dir / "runlog.csv").string());
  runlog::RunSummary summary = result.summary;
  summary.runlog_csv = (dir / "runlog.csv").string();
  summary.save_json((dir / "summary.json").string());
}

}  // namespace treegrpo::harness
