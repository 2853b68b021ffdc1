#pragma once

/**
 * Per-iteration metrics log. Append-only, one record per iteration; numeric
 * fields other than wall-clock are deterministic given (config, seed).
 * Persisted as CSV (column order documented in README) with a schema-version
 * header line, plus a JSON run summary.
 */

#include <string>
#include <vector>

namespace treegrpo::runlog {

inline constexpr int kSchemaVersion = 1;

struct RewardColumn {
  double raw_mean = 0.0;
  double raw_max = 0.0;
  double std_mean = 0.0;  // standardized by the running stats
};

struct Record {
  int epoch = 0;
  int window_start = -1;  // -1 for the trajectory baseline
  std::vector<RewardColumn> rewards;  // one per reward model
  double loss = 0.0;
  double clip_fraction = 0.0;
  double mean_ess = 0.0;
  double grad_norm = 0.0;
  long long cum_nfe = 0;
  double wall_seconds = 0.0;
};

struct RunLog {
  int schema_version = kSchemaVersion;
  std::string method;
  std::vector<std::string> reward_names;
  std::vector<Record> records;

  std::string to_csv() const;
  void save_csv(const std::string& path) const;
  static RunLog load_csv(const std::string& path);
};

// Run summary next to the CSV: config echo, pretrained baseline rewards,
// final evaluation, cumulative NFE.
struct RunSummary {
  int schema_version = kSchemaVersion;
  std::string method;
  uint64_t seed = 0;
  std::vector<std::string> reward_names;
  std::vector<double> reward_weights;
  std::vector<double> reward_rmax;
  std::vector<double> baseline_eval;  // pretrained checkpoint, per reward
  std::vector<double> final_eval;     // trained checkpoint, per reward
  long long total_nfe = 0;
  double wall_seconds = 0.0;
  std::string runlog_csv;  // path of the matching CSV

  std::string to_json() const;
  void save_json(const std::string& path) const;
  static RunSummary load_json(const std::string& path);
};

// Tidy plot table across runs: one row per logged iteration with raw and
// normalized rewards, normalized as (r - r_base) / (r_max - r_base) with
// r_base the pretrained evaluation. Throws if schema versions differ.
void emit_plot_data(const std::vector<RunSummary>& summaries,
                    const std::string& out_csv_path);

}  // namespace treegrpo::runlog
