#include "gatepro/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace gatepro {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string fmt_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto res = std::from_chars(first, last, out);
  if (res.ec != std::errc{} || res.ptr != last) {
    throw ConfigError("config: bad value for '" + key + "': '" + value + "'");
  }
  return out;
}

}  // namespace

std::string to_string(GateMode mode) {
  return mode == GateMode::gatepro ? "gatepro" : "baseline";
}

GateMode mode_from_string(const std::string& name) {
  if (name == "gatepro") return GateMode::gatepro;
  if (name == "baseline") return GateMode::baseline;
  throw ConfigError("config: unknown mode '" + name + "'");
}

GateMode mode_at(const HotSwapSchedule& schedule, long step) {
  if (schedule.entries.empty()) {
    throw ContractViolation("mode_at: empty schedule");
  }
  if (step < schedule.entries.front().start_step) {
    throw ContractViolation("mode_at: step precedes the schedule");
  }
  const auto it = std::upper_bound(
      schedule.entries.begin(), schedule.entries.end(), step,
      [](long s, const HotSwapEntry& e) { return s < e.start_step; });
  return std::prev(it)->mode;
}

std::string schedule_to_string(const HotSwapSchedule& schedule) {
  std::string out;
  for (std::size_t i = 0; i < schedule.entries.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(schedule.entries[i].start_step) + ":" +
           to_string(schedule.entries[i].mode);
  }
  return out;
}

HotSwapSchedule schedule_from_string(const std::string& text) {
  HotSwapSchedule schedule;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string entry = trim(item);
    const auto colon = entry.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("config: schedule entry '" + entry +
                        "' is not start:mode");
    }
    HotSwapEntry e;
    e.start_step = parse_number<long>("schedule", trim(entry.substr(0, colon)));
    e.mode = mode_from_string(trim(entry.substr(colon + 1)));
    schedule.entries.push_back(e);
  }
  if (schedule.entries.empty()) {
    throw ConfigError("config: empty schedule");
  }
  return schedule;
}

void validate_config(const RunConfig& cfg) {
  if (cfg.n_experts < 2) throw ConfigError("config: n_experts must be >= 2");
  if (cfg.top_k < 1 || cfg.top_k > cfg.n_experts) {
    throw ConfigError("config: top_k must be in [1, n_experts]");
  }
  if (cfg.dim < 1) throw ConfigError("config: dim must be >= 1");
  if (cfg.hidden < 1) throw ConfigError("config: hidden must be >= 1");
  if (cfg.layers < 1) throw ConfigError("config: layers must be >= 1");
  if (cfg.lambda < 0.0) throw ConfigError("config: lambda must be >= 0");
  if (cfg.balance_coeff < 0.0) {
    throw ConfigError("config: balance_coeff must be >= 0");
  }
  if (!(cfg.lr > 0.0)) throw ConfigError("config: lr must be > 0");
  if (cfg.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (cfg.steps < 1) throw ConfigError("config: steps must be >= 1");
  if (cfg.metrics_every < 1) {
    throw ConfigError("config: metrics_every must be >= 1");
  }

  const auto& entries = cfg.schedule.entries;
  if (entries.empty()) throw ConfigError("config: empty schedule");
  if (entries.front().start_step != 0) {
    throw ConfigError("config: schedule must start at step 0");
  }
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].start_step <= entries[i - 1].start_step) {
      throw ConfigError("config: schedule steps must be strictly increasing");
    }
  }

  if (cfg.task.n_clusters < 2) {
    throw ConfigError("config: task.n_clusters must be >= 2");
  }
  if (cfg.task.n_classes < 1) {
    throw ConfigError("config: task.n_classes must be >= 1");
  }
  if (cfg.task.cluster_spread < 0.0) {
    throw ConfigError("config: task.cluster_spread must be >= 0");
  }
  if (cfg.task.dim != cfg.dim) {
    throw ConfigError("config: task.dim must match dim");
  }
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  bool task_dim_given = false;

  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) {
      throw ConfigError("config: duplicate key '" + key + "'");
    }

    if (key == "n_experts") {
      cfg.n_experts = parse_number<int>(key, value);
    } else if (key == "top_k") {
      cfg.top_k = parse_number<int>(key, value);
    } else if (key == "dim") {
      cfg.dim = parse_number<int>(key, value);
    } else if (key == "hidden") {
      cfg.hidden = parse_number<int>(key, value);
    } else if (key == "layers") {
      cfg.layers = parse_number<int>(key, value);
    } else if (key == "lambda") {
      cfg.lambda = parse_number<double>(key, value);
    } else if (key == "balance_coeff") {
      cfg.balance_coeff = parse_number<double>(key, value);
    } else if (key == "lr") {
      cfg.lr = parse_number<double>(key, value);
    } else if (key == "batch_size") {
      cfg.batch_size = parse_number<int>(key, value);
    } else if (key == "steps") {
      cfg.steps = parse_number<long>(key, value);
    } else if (key == "seed") {
      cfg.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "schedule") {
      cfg.schedule = schedule_from_string(value);
    } else if (key == "metrics_every") {
      cfg.metrics_every = parse_number<long>(key, value);
    } else if (key == "out_dir") {
      cfg.out_dir = value;
    } else if (key == "task.n_clusters") {
      cfg.task.n_clusters = parse_number<int>(key, value);
    } else if (key == "task.dim") {
      cfg.task.dim = parse_number<int>(key, value);
      task_dim_given = true;
    } else if (key == "task.n_classes") {
      cfg.task.n_classes = parse_number<int>(key, value);
    } else if (key == "task.cluster_spread") {
      cfg.task.cluster_spread = parse_number<double>(key, value);
    } else if (key == "task.seed") {
      cfg.task.seed = parse_number<std::uint64_t>(key, value);
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }

  if (!task_dim_given) cfg.task.dim = cfg.dim;
  validate_config(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read config file: " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

std::string config_to_text(const RunConfig& cfg) {
  std::ostringstream out;
  out << "n_experts = " << cfg.n_experts << "\n";
  out << "top_k = " << cfg.top_k << "\n";
  out << "dim = " << cfg.dim << "\n";
  out << "hidden = " << cfg.hidden << "\n";
  out << "layers = " << cfg.layers << "\n";
  out << "lambda = " << fmt_double(cfg.lambda) << "\n";
  out << "balance_coeff = " << fmt_double(cfg.balance_coeff) << "\n";
  out << "lr = " << fmt_double(cfg.lr) << "\n";
  out << "batch_size = " << cfg.batch_size << "\n";
  out << "steps = " << cfg.steps << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "schedule = " << schedule_to_string(cfg.schedule) << "\n";
  out << "metrics_every = " << cfg.metrics_every << "\n";
  out << "out_dir = " << cfg.out_dir << "\n";
  out << "task.n_clusters = " << cfg.task.n_clusters << "\n";
  out << "task.dim = " << cfg.task.dim << "\n";
  out << "task.n_classes = " << cfg.task.n_classes << "\n";
  out << "task.cluster_spread = " << fmt_double(cfg.task.cluster_spread) << "\n";
  out << "task.seed = " << cfg.task.seed << "\n";
  return out.str();
}

}  // namespace gatepro
