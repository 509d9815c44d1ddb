#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gatepro/moe.hpp"
#include "gatepro/task.hpp"

namespace gatepro {

struct HotSwapEntry {
  long start_step = 0;
  GateMode mode = GateMode::baseline;
};

/// Mode transitions at step boundaries; first entry starts at step 0 and
/// start steps are strictly increasing.
struct HotSwapSchedule {
  std::vector<HotSwapEntry> entries;
};

/// Active mode at `step`: the last entry with start_step <= step.
GateMode mode_at(const HotSwapSchedule& schedule, long step);

struct RunConfig {
  int n_experts = 16;
  int top_k = 2;
  int dim = 32;
  int hidden = 128;
  int layers = 3;
  double lambda = 1e-4;
  double balance_coeff = 0.01;
  double lr = 1e-3;
  int batch_size = 256;
  long steps = 5000;
  std::uint64_t seed = 1;
  HotSwapSchedule schedule{{{0, GateMode::gatepro}}};
  SyntheticTaskSpec task;
  long metrics_every = 50;
  std::string out_dir;
};

/// Throws ConfigError when any field is out of range or inconsistent.
void validate_config(const RunConfig& cfg);

/// Parses a `key = value` document ('#' starts a comment; task fields are
/// dotted, e.g. task.n_clusters). Unknown and duplicate keys are rejected.
/// task.dim defaults to dim when not given.
RunConfig parse_config_text(const std::string& text);

/// parse_config_text over a file's contents.
RunConfig load_config(const std::filesystem::path& path);

/// Canonical echo of every field, parseable by parse_config_text.
std::string config_to_text(const RunConfig& cfg);

std::string to_string(GateMode mode);
GateMode mode_from_string(const std::string& name);

std::string schedule_to_string(const HotSwapSchedule& schedule);
HotSwapSchedule schedule_from_string(const std::string& text);

}  // namespace gatepro
