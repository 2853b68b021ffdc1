// Command-line front end: pretrain / train / eval / plot-data / verify.
//
// Every config key (see `treegrpo train --help`) is also a command-line flag
// of the same name; flags override the config file. The seed may instead be
// supplied via the TREEGRPO_SEED environment variable.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "treegrpo/config.hpp"
#include "treegrpo/harness.hpp"
#include "treegrpo/verification.hpp"

namespace {

using treegrpo::config::KeyValues;

struct ConfigCli {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "config file (key=value lines)");
    for (const auto& [key, info] : treegrpo::config::key_registry()) {
      app->add_option_function<std::string>(
          "--" + key,
          [this, k = key](const std::string& value) {
            overrides.emplace_back(k, value);
          },
          info.help + " [" + info.default_value + "]");
    }
  }

  KeyValues resolve() const {
    KeyValues kv = config_path.empty() ? KeyValues()
                                       : KeyValues::from_file(config_path);
    if (const char* env_seed = std::getenv("TREEGRPO_SEED")) {
      kv.set("seed", env_seed);
    }
    for (const auto& [key, value] : overrides) kv.set(key, value);
    return kv;
  }
};

int cmd_pretrain(const ConfigCli& cli, const std::string& out_path,
                 const std::string& curve_path) {
  const treegrpo::config::RunConfig cfg =
      treegrpo::config::build_run_config(cli.resolve());
  treegrpo::flow::VelocityField model(
      cfg.data_dim, cfg.num_conditions, cfg.hidden,
      treegrpo::rng::mix(cfg.pretrain_seed, treegrpo::rng::stream_label::kInit));
  const treegrpo::flow::PretrainResult result = treegrpo::flow::pretrain(
      model, cfg.task(), cfg.pretrain,
      treegrpo::rng::Stream(cfg.pretrain_seed)
          .child(treegrpo::rng::stream_label::kPretrain));
  model.save(out_path);
  if (!curve_path.empty()) {
    std::ofstream os(curve_path);
    os << "step,fm_loss\n";
    for (const auto& [step, loss] : result.loss_curve) {
      os << step << "," << loss << "\n";
    }
  }
  std::cout << "checkpoint: " << out_path
            << "\nheld-out fm loss: " << result.holdout_loss
            << " (threshold " << cfg.pretrain.holdout_loss_threshold << ")\n";
  if (result.holdout_loss > cfg.pretrain.holdout_loss_threshold) {
    std::cerr << "warning: held-out loss above threshold\n";
    return 1;
  }
  return 0;
}

int cmd_train(const ConfigCli& cli) {
  const treegrpo::config::RunConfig cfg =
      treegrpo::config::build_run_config(cli.resolve());
  const treegrpo::flow::VelocityField initial =
      treegrpo::harness::prepare_model(cfg);
  const treegrpo::harness::TrainResult result =
      treegrpo::harness::run_training(cfg, initial);
  treegrpo::harness::persist_run(result, cfg);

  std::cout << "method: " << result.log.method << "\n"
            << "iterations: " << result.log.records.size() << "\n"
            << "total nfe: " << result.summary.total_nfe << "\n";
  for (size_t k = 0; k < result.summary.reward_names.size(); ++k) {
    std::cout << result.summary.reward_names[k]
              << ": pretrained " << result.summary.baseline_eval[k]
              << " -> trained " << result.summary.final_eval[k] << "\n";
  }
  std::cout << "outputs in " << cfg.out_dir << "\n";
  return 0;
}

int cmd_eval(const ConfigCli& cli, const std::string& checkpoint, int samples) {
  treegrpo::config::RunConfig cfg =
      treegrpo::config::build_run_config(cli.resolve());
  if (samples > 0) cfg.eval_samples = samples;
  const treegrpo::flow::VelocityField model =
      treegrpo::flow::VelocityField::load(checkpoint);
  const treegrpo::harness::RewardBank bank =
      treegrpo::harness::RewardBank::from_config(cfg);
  const treegrpo::sampler::Schedule schedule = treegrpo::sampler::make_schedule(
      cfg.horizon, cfg.tau_min, cfg.noise_coeff);
  const std::vector<double> means = treegrpo::harness::evaluate(
      model, bank, cfg.prompts, cfg.eval_samples, schedule,
      treegrpo::rng::mix(cfg.seed, treegrpo::rng::stream_label::kEval));
  nlohmann::json j;
  for (size_t k = 0; k < means.size(); ++k) {
    j[bank.specs[k].name] = means[k];
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_plot_data(const std::vector<std::string>& summaries,
                  const std::string& out_path) {
  std::vector<treegrpo::runlog::RunSummary> loaded;
  for (const std::string& path : summaries) {
    loaded.push_back(treegrpo::runlog::RunSummary::load_json(path));
  }
  treegrpo::runlog::emit_plot_data(loaded, out_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tree-structured GRPO post-training lab for 2-D flow models"};
  app.require_subcommand(1);

  ConfigCli pretrain_cli, train_cli, eval_cli;
  std::string pretrain_out = "pretrained.ckpt";
  std::string pretrain_curve;
  std::string eval_checkpoint;
  int eval_samples = 0;
  std::vector<std::string> plot_summaries;
  std::string plot_out = "plotdata.csv";

  CLI::App* pretrain = app.add_subcommand("pretrain", "flow-matching pretraining");
  pretrain_cli.attach(pretrain);
  pretrain->add_option("--out", pretrain_out, "checkpoint output path");
  pretrain->add_option("--curve", pretrain_curve, "loss curve CSV path");

  CLI::App* train = app.add_subcommand("train", "RL post-training run");
  train_cli.attach(train);

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cli.attach(eval_cmd);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint path")
      ->required();
  eval_cmd->add_option("--samples", eval_samples, "ODE samples per prompt");

  CLI::App* plot = app.add_subcommand("plot-data", "emit a tidy plot table");
  plot->add_option("summaries", plot_summaries, "summary.json files")
      ->required()
      ->expected(-1);
  plot->add_option("--out", plot_out, "output CSV path");

  CLI::App* verify = app.add_subcommand("verify", "run the self-check suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pretrain->parsed()) {
      return cmd_pretrain(pretrain_cli, pretrain_out, pretrain_curve);
    }
    if (train->parsed()) return cmd_train(train_cli);
    if (eval_cmd->parsed()) {
      return cmd_eval(eval_cli, eval_checkpoint, eval_samples);
    }
    if (plot->parsed()) return cmd_plot_data(plot_summaries, plot_out);
    if (verify->parsed()) {
      return treegrpo::verify::run_verification_suite(std::cout) ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
