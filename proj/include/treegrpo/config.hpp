#pragma once

/**
 * Run configuration: a flat key=value text file with dotted section keys
 * (tree.branch=3). Every key can be overridden on the command line by a flag
 * of the same name; the seed can also come from the TREEGRPO_SEED
 * environment variable. Unknown keys are rejected.
 */

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "treegrpo/advantage.hpp"
#include "treegrpo/flow_model.hpp"
#include "treegrpo/grpo.hpp"
#include "treegrpo/rewards.hpp"
#include "treegrpo/window.hpp"

namespace treegrpo::config {

struct KeyInfo {
  std::string default_value;
  std::string help;
};

// Known keys with defaults and one-line help (drives --help and validation).
const std::map<std::string, KeyInfo>& key_registry();

// Raw key-value view after file parse + overrides.
class KeyValues {
 public:
  KeyValues();  // registry defaults

  static KeyValues from_file(const std::string& path);

  void set(const std::string& key, const std::string& value);  // throws on unknown key
  const std::string& get(const std::string& key) const;

  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  uint64_t get_u64(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;  // comma list
  std::vector<int> get_ints(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

enum class Method { kTreeGrpo, kTrajectoryGrpo };

struct RunConfig {
  Method method = Method::kTreeGrpo;
  uint64_t seed = 1;
  std::string out_dir = "runs/default";

  // model + task
  std::vector<int> hidden = {64, 64};
  int data_dim = 2;
  int num_conditions = 2;
  double data_std = 0.8;
  double task_radius = 1.5;

  // schedule
  int horizon = 10;  // T
  double tau_min = 0.02;
  double noise_coeff = 0.7;

  // tree
  int branch = 3;
  int depth = 3;  // also the window length w
  int trees_per_prompt = 1;

  // window scheduler
  window::Strategy strategy = window::Strategy::kRandom;
  double geometric_r = 0.5;
  int stride = 1;
  int fixed_start = 0;

  // rewards
  std::vector<rewards::RewardSpec> reward_specs;  // default: mode_proximity
  double ring_radius = 2.0;
  advantage::MultiRewardMode reward_mode =
      advantage::MultiRewardMode::kAdvantageSum;
  bool standardize_rewards = false;  // global-stat standardization (reward-sum)
  double stats_decay = 0.99;
  double sigma_floor = 1e-8;

  // update
  grpo::UpdateConfig update;

  // baseline
  int baseline_group = 27;  // G

  // run
  int epochs = 300;
  std::vector<int> prompts = {0, 1};  // condition ids in the batch
  long long nfe_budget = 0;           // 0 = unlimited; stop once reached
  int eval_samples = 1024;
  int checkpoint_every = 0;  // 0 = final only
  std::string checkpoint_path;  // input checkpoint; empty = pretrain first

  // pretraining
  flow::PretrainConfig pretrain;
  uint64_t pretrain_seed = 42;

  flow::SyntheticTask task() const {
    return flow::make_task(num_conditions, data_dim, data_std, task_radius);
  }
};

// Validates and assembles the typed config; throws invalid_argument with the
// offending key in the message.
RunConfig build_run_config(const KeyValues& kv);

}  // namespace treegrpo::config
