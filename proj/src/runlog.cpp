#include "treegrpo/runlog.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace treegrpo::runlog {

namespace {

// %.17g round-trips doubles exactly, which is what the bit-level
// determinism contract on reward columns needs.
std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string RunLog::to_csv() const {
  std::ostringstream os;
  os << "# runlog_schema=" << schema_version << " method=" << method << "\n";
  os << "epoch,window_start";
  for (const std::string& name : reward_names) {
    os << ",raw_mean_" << name << ",raw_max_" << name << ",std_mean_" << name;
  }
  os << ",loss,clip_fraction,mean_ess,grad_norm,cum_nfe,wall_seconds\n";
  for (const Record& r : records) {
    os << r.epoch << "," << r.window_start;
    for (const RewardColumn& c : r.rewards) {
      os << "," << num(c.raw_mean) << "," << num(c.raw_max) << ","
         << num(c.std_mean);
    }
    os << "," << num(r.loss) << "," << num(r.clip_fraction) << ","
       << num(r.mean_ess) << "," << num(r.grad_norm) << "," << r.cum_nfe << ","
       << num(r.wall_seconds) << "\n";
  }
  return os.str();
}

void RunLog::save_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write runlog: " + path);
  os << to_csv();
}

RunLog RunLog::load_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open runlog: " + path);
  RunLog log;
  std::string line;

  if (!std::getline(is, line) || line.rfind("# runlog_schema=", 0) != 0) {
    throw std::runtime_error("runlog missing schema header: " + path);
  }
  {
    std::istringstream header(line.substr(std::string("# runlog_schema=").size()));
    header >> log.schema_version;
    const auto method_pos = line.find("method=");
    if (method_pos != std::string::npos) {
      log.method = line.substr(method_pos + 7);
    }
  }

  if (!std::getline(is, line)) throw std::runtime_error("runlog truncated");
  {
    std::stringstream columns(line);
    std::string col;
    while (std::getline(columns, col, ',')) {
      if (col.rfind("raw_mean_", 0) == 0) {
        log.reward_names.push_back(col.substr(9));
      }
    }
  }

  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    auto next = [&]() -> std::string {
      if (!std::getline(row, cell, ',')) {
        throw std::runtime_error("runlog row too short");
      }
      return cell;
    };
    Record r;
    r.epoch = std::stoi(next());
    r.window_start = std::stoi(next());
    for (size_t i = 0; i < log.reward_names.size(); ++i) {
      RewardColumn c;
      c.raw_mean = std::stod(next());
      c.raw_max = std::stod(next());
      c.std_mean = std::stod(next());
      r.rewards.push_back(c);
    }
    r.loss = std::stod(next());
    r.clip_fraction = std::stod(next());
    r.mean_ess = std::stod(next());
    r.grad_norm = std::stod(next());
    r.cum_nfe = std::stoll(next());
    r.wall_seconds = std::stod(next());
    log.records.push_back(std::move(r));
  }
  return log;
}

std::string RunSummary::to_json() const {
  nlohmann::json j;
  j["schema_version"] = schema_version;
  j["method"] = method;
  j["seed"] = seed;
  j["reward_names"] = reward_names;
  j["reward_weights"] = reward_weights;
  j["reward_rmax"] = reward_rmax;
  j["baseline_eval"] = baseline_eval;
  j["final_eval"] = final_eval;
  j["total_nfe"] = total_nfe;
  j["wall_seconds"] = wall_seconds;
  j["runlog_csv"] = runlog_csv;
  return j.dump(2);
}

void RunSummary::save_json(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write summary: " + path);
  os << to_json() << "\n";
}

RunSummary RunSummary::load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open summary: " + path);
  nlohmann::json j;
  is >> j;
  RunSummary s;
  s.schema_version = j.at("schema_version").get<int>();
  s.method = j.at("method").get<std::string>();
  s.seed = j.at("seed").get<uint64_t>();
  s.reward_names = j.at("reward_names").get<std::vector<std::string>>();
  s.reward_weights = j.at("reward_weights").get<std::vector<double>>();
  s.reward_rmax = j.at("reward_rmax").get<std::vector<double>>();
  s.baseline_eval = j.at("baseline_eval").get<std::vector<double>>();
  s.final_eval = j.at("final_eval").get<std::vector<double>>();
  s.total_nfe = j.at("total_nfe").get<long long>();
  s.wall_seconds = j.at("wall_seconds").get<double>();
  s.runlog_csv = j.at("runlog_csv").get<std::string>();
  return s;
}

void emit_plot_data(const std::vector<RunSummary>& summaries,
                    const std::string& out_csv_path) {
  if (summaries.empty()) {
    throw std::invalid_argument("emit_plot_data: need at least one run");
  }
  for (const RunSummary& s : summaries) {
    if (s.schema_version != summaries.front().schema_version) {
      throw std::runtime_error("emit_plot_data: schema version mismatch across runs");
    }
  }

  std::ofstream os(out_csv_path);
  if (!os) throw std::runtime_error("cannot write plot data: " + out_csv_path);
  os << "method,seed,epoch,cum_nfe,wall_seconds";
  for (const std::string& name : summaries.front().reward_names) {
    os << ",raw_" << name << ",norm_" << name;
  }
  os << "\n";

  for (const RunSummary& summary : summaries) {
    const RunLog log = RunLog::load_csv(summary.runlog_csv);
    if (log.schema_version != summary.schema_version) {
      throw std::runtime_error("emit_plot_data: runlog/summary schema mismatch");
    }
    for (const Record& r : log.records) {
      os << summary.method << "," << summary.seed << "," << r.epoch << ","
         << r.cum_nfe << "," << num(r.wall_seconds);
      for (size_t k = 0; k < r.rewards.size(); ++k) {
        const double base = summary.baseline_eval[k];
        const double top = summary.reward_rmax[k];
        const double denom = top - base;
        const double normalized =
            denom == 0.0 ? 0.0 : (r.rewards[k].raw_mean - base) / denom;
        os << "," << num(r.rewards[k].raw_mean) << "," << num(normalized);
      }
      os << "\n";
    }
  }
}

}  // namespace treegrpo::runlog
