#include "treegrpo/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace treegrpo::config {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(trim(item));
  return parts;
}

}  // namespace

const std::map<std::string, KeyInfo>& key_registry() {
  static const std::map<std::string, KeyInfo> registry = {
      {"method", {"treegrpo", "treegrpo | trajectory_grpo"}},
      {"seed", {"1", "root seed for all derived streams"}},
      {"run.out_dir", {"runs/default", "output directory"}},
      {"model.hidden", {"64,64", "hidden layer widths"}},
      {"model.data_dim", {"2", "latent/data dimension"}},
      {"task.num_conditions", {"2", "number of prompt conditions"}},
      {"task.data_std", {"0.8", "per-mode data standard deviation"}},
      {"task.radius", {"1.5", "mode center placement radius"}},
      {"schedule.steps", {"10", "denoising horizon T"}},
      {"schedule.tau_min", {"0.02", "noise-level floor for the score term"}},
      {"schedule.noise_coeff", {"0.7", "a in sigma_k = a*sqrt(tau_{k+1})"}},
      {"tree.branch", {"3", "children per SDE branching step"}},
      {"tree.depth", {"3", "branching levels = window length"}},
      {"tree.trees_per_prompt", {"1", "trees built per prompt per epoch"}},
      {"window.strategy", {"random", "random | shifting | fixed"}},
      {"window.r", {"0.5", "truncated-geometric parameter"}},
      {"window.stride", {"1", "shifting stride"}},
      {"window.fixed_start", {"0", "start index for the fixed strategy"}},
      {"rewards.models", {"mode_proximity", "comma list of reward names"}},
      {"rewards.weights", {"1", "comma list of weights (sum 1)"}},
      {"rewards.rmax", {"0", "per-model best raw score for plot scaling"}},
      {"rewards.ring_radius", {"2.0", "radius of the ring reward"}},
      {"rewards.mode", {"advantage_sum", "advantage_sum | reward_sum"}},
      {"rewards.standardize", {"false", "standardize raw scores by running stats (reward_sum path)"}},
      {"rewards.stats_decay", {"0.99", "EMA decay of reward statistics"}},
      {"rewards.sigma_floor", {"1e-8", "std floor for normalization"}},
      {"update.clip", {"0.2", "PPO clip epsilon"}},
      {"update.lr", {"1e-4", "policy learning rate"}},
      {"update.weight_decay", {"0.01", "decoupled weight decay"}},
      {"update.beta1", {"0.9", "first-moment decay"}},
      {"update.beta2", {"0.999", "second-moment decay"}},
      {"update.inner_epochs", {"1", "update passes per collected batch"}},
      {"update.refresh_cadence", {"1", "collected batches between behavior refreshes"}},
      {"update.micro_batch", {"0", "edges per optimizer step (0 = whole batch)"}},
      {"update.mean_loss", {"false", "average edge terms instead of summing"}},
      {"baseline.group", {"27", "trajectories per prompt (G)"}},
      {"run.epochs", {"300", "training iterations"}},
      {"run.prompts", {"0,1", "condition ids in each prompt batch"}},
      {"run.nfe_budget", {"0", "stop after this many sampling NFE (0 = off)"}},
      {"run.eval_samples", {"1024", "ODE samples per prompt in evaluation"}},
      {"run.checkpoint_every", {"0", "periodic checkpoint interval (0 = final only)"}},
      {"run.checkpoint", {"", "input checkpoint path (empty = pretrain)"}},
      {"pretrain.steps", {"20000", "flow-matching steps"}},
      {"pretrain.batch", {"64", "flow-matching batch size"}},
      {"pretrain.lr", {"1e-3", "pretraining learning rate"}},
      {"pretrain.holdout", {"2048", "held-out pairs for the final loss"}},
      {"pretrain.loss_threshold", {"2.8", "held-out loss bound (calibrated)"}},
      {"pretrain.seed", {"42", "pretraining seed"}},
  };
  return registry;
}

KeyValues::KeyValues() {
  for (const auto& [key, info] : key_registry()) {
    values_[key] = info.default_value;
  }
}

KeyValues KeyValues::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  KeyValues kv;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected key=value");
    }
    kv.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  return kv;
}

void KeyValues::set(const std::string& key, const std::string& value) {
  if (key_registry().find(key) == key_registry().end()) {
    throw std::invalid_argument("unknown config key: " + key);
  }
  values_[key] = value;
}

const std::string& KeyValues::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw std::invalid_argument("unknown config key: " + key);
  return it->second;
}

double KeyValues::get_double(const std::string& key) const {
  try {
    size_t pos = 0;
    const double v = std::stod(get(key), &pos);
    if (pos != get(key).size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key " + key + ": expected a number, got '" +
                                get(key) + "'");
  }
}

int KeyValues::get_int(const std::string& key) const {
  try {
    size_t pos = 0;
    const int v = std::stoi(get(key), &pos);
    if (pos != get(key).size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key " + key + ": expected an integer, got '" +
                                get(key) + "'");
  }
}

uint64_t KeyValues::get_u64(const std::string& key) const {
  try {
    size_t pos = 0;
    const uint64_t v = std::stoull(get(key), &pos);
    if (pos != get(key).size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key " + key + ": expected an unsigned integer");
  }
}

bool KeyValues::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config key " + key + ": expected true/false");
}

std::vector<double> KeyValues::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& part : split(get(key), ',')) {
    if (part.empty()) continue;
    out.push_back(std::stod(part));
  }
  return out;
}

std::vector<int> KeyValues::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (const std::string& part : split(get(key), ',')) {
    if (part.empty()) continue;
    out.push_back(std::stoi(part));
  }
  return out;
}

std::vector<std::string> KeyValues::get_strings(const std::string& key) const {
  std::vector<std::string> out;
  for (const std::string& part : split(get(key), ',')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

RunConfig build_run_config(const KeyValues& kv) {
  RunConfig cfg;

  const std::string method = kv.get("method");
  if (method == "treegrpo") {
    cfg.method = Method::kTreeGrpo;
  } else if (method == "trajectory_grpo") {
    cfg.method = Method::kTrajectoryGrpo;
  } else {
    throw std::invalid_argument("method must be treegrpo or trajectory_grpo");
  }

  cfg.seed = kv.get_u64("seed");
  cfg.out_dir = kv.get("run.out_dir");
  cfg.hidden = kv.get_ints("model.hidden");
  cfg.data_dim = kv.get_int("model.data_dim");
  cfg.num_conditions = kv.get_int("task.num_conditions");
  cfg.data_std = kv.get_double("task.data_std");
  cfg.task_radius = kv.get_double("task.radius");

  cfg.horizon = kv.get_int("schedule.steps");
  cfg.tau_min = kv.get_double("schedule.tau_min");
  cfg.noise_coeff = kv.get_double("schedule.noise_coeff");

  cfg.branch = kv.get_int("tree.branch");
  cfg.depth = kv.get_int("tree.depth");
  cfg.trees_per_prompt = kv.get_int("tree.trees_per_prompt");

  const std::string strategy = kv.get("window.strategy");
  if (strategy == "random") {
    cfg.strategy = window::Strategy::kRandom;
  } else if (strategy == "shifting") {
    cfg.strategy = window::Strategy::kShifting;
  } else if (strategy == "fixed") {
    cfg.strategy = window::Strategy::kFixed;
  } else {
    throw std::invalid_argument("window.strategy must be random, shifting or fixed");
  }
  cfg.geometric_r = kv.get_double("window.r");
  cfg.stride = kv.get_int("window.stride");
  cfg.fixed_start = kv.get_int("window.fixed_start");

  const std::vector<std::string> names = kv.get_strings("rewards.models");
  const std::vector<double> weights = kv.get_doubles("rewards.weights");
  const std::vector<double> rmax = kv.get_doubles("rewards.rmax");
  if (names.empty()) throw std::invalid_argument("rewards.models: need at least one");
  if (weights.size() != names.size() || rmax.size() != names.size()) {
    throw std::invalid_argument(
        "rewards.models, rewards.weights and rewards.rmax must have equal length");
  }
  double weight_sum = 0.0;
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i] != "mode_proximity" && names[i] != "ring") {
      throw std::invalid_argument("rewards.models: unregistered reward '" +
                                  names[i] + "'");
    }
    if (weights[i] < 0.0) throw std::invalid_argument("rewards.weights must be >= 0");
    weight_sum += weights[i];
    cfg.reward_specs.push_back({names[i], weights[i], rmax[i]});
  }
  if (std::abs(weight_sum - 1.0) > 1e-9) {
    throw std::invalid_argument("rewards.weights must sum to 1");
  }
  cfg.ring_radius = kv.get_double("rewards.ring_radius");
  const std::string mode = kv.get("rewards.mode");
  if (mode == "advantage_sum") {
    cfg.reward_mode = advantage::MultiRewardMode::kAdvantageSum;
  } else if (mode == "reward_sum") {
    cfg.reward_mode = advantage::MultiRewardMode::kRewardSum;
  } else {
    throw std::invalid_argument("rewards.mode must be advantage_sum or reward_sum");
  }
  cfg.standardize_rewards = kv.get_bool("rewards.standardize");
  cfg.stats_decay = kv.get_double("rewards.stats_decay");
  cfg.sigma_floor = kv.get_double("rewards.sigma_floor");

  cfg.update.clip = kv.get_double("update.clip");
  cfg.update.learning_rate = kv.get_double("update.lr");
  cfg.update.weight_decay = kv.get_double("update.weight_decay");
  cfg.update.beta1 = kv.get_double("update.beta1");
  cfg.update.beta2 = kv.get_double("update.beta2");
  cfg.update.inner_epochs = kv.get_int("update.inner_epochs");
  cfg.update.refresh_cadence = kv.get_int("update.refresh_cadence");
  cfg.update.micro_batch = kv.get_int("update.micro_batch");
  cfg.update.mean_loss = kv.get_bool("update.mean_loss");

  cfg.baseline_group = kv.get_int("baseline.group");

  cfg.epochs = kv.get_int("run.epochs");
  cfg.prompts = kv.get_ints("run.prompts");
  cfg.nfe_budget = static_cast<long long>(kv.get_u64("run.nfe_budget"));
  cfg.eval_samples = kv.get_int("run.eval_samples");
  cfg.checkpoint_every = kv.get_int("run.checkpoint_every");
  cfg.checkpoint_path = kv.get("run.checkpoint");

  cfg.pretrain.steps = kv.get_int("pretrain.steps");
  cfg.pretrain.batch_size = kv.get_int("pretrain.batch");
  cfg.pretrain.learning_rate = kv.get_double("pretrain.lr");
  cfg.pretrain.holdout_size = kv.get_int("pretrain.holdout");
  cfg.pretrain.holdout_loss_threshold = kv.get_double("pretrain.loss_threshold");
  cfg.pretrain_seed = kv.get_u64("pretrain.seed");

  // cross-field validation before any compute
  if (cfg.update.clip <= 0.0) throw std::invalid_argument("update.clip must be > 0");
  if (cfg.update.inner_epochs < 1) {
    throw std::invalid_argument("update.inner_epochs must be >= 1");
  }
  if (cfg.update.refresh_cadence < 1) {
    throw std::invalid_argument("update.refresh_cadence must be >= 1");
  }
  if (cfg.epochs < 0) throw std::invalid_argument("run.epochs must be >= 0");
  if (cfg.prompts.empty()) throw std::invalid_argument("run.prompts must be non-empty");
  for (int p : cfg.prompts) {
    if (p < 0 || p >= cfg.num_conditions) {
      throw std::invalid_argument("run.prompts contains an unregistered condition");
    }
  }
  if (cfg.method == Method::kTreeGrpo) {
    if (cfg.branch < 2) throw std::invalid_argument("tree.branch must be >= 2");
    if (cfg.depth < 1 || cfg.depth > cfg.horizon - 1) {
      throw std::invalid_argument("tree.depth must satisfy 1 <= d <= T-1");
    }
    if (cfg.trees_per_prompt < 1) {
      throw std::invalid_argument("tree.trees_per_prompt must be >= 1");
    }
    if (!(cfg.noise_coeff > 0.0)) {
      throw std::invalid_argument("schedule.noise_coeff must be > 0 for SDE windows");
    }
  } else {
    if (cfg.baseline_group < 2) {
      throw std::invalid_argument("baseline.group must be >= 2");
    }
    if (!(cfg.noise_coeff > 0.0)) {
      throw std::invalid_argument("schedule.noise_coeff must be > 0 for the baseline");
    }
  }
  return cfg;
}

}  // namespace treegrpo::config
