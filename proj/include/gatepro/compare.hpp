#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gatepro/metrics_log.hpp"

namespace gatepro {

/// First logged step at which zero_token_count drops to `threshold` or
/// below on the given layer; empty when it never does.
std::optional<long> steps_to_activation(const std::vector<MetricsRow>& rows,
                                        int layer, int threshold);

/// Per-step metric differences (run A minus run B) on one layer.
struct DeltaRow {
  long step = 0;
  double zero_token_count = 0.0;
  double avg_cos_sim = 0.0;
  double avg_angle = 0.0;
  double spectral_entropy = 0.0;
  double task_loss = 0.0;
  double accuracy_estimate = 0.0;
};

struct LayerComparison {
  int layer = 0;
  std::optional<long> steps_to_activation_a;
  std::optional<long> steps_to_activation_b;
  double final_avg_cos_sim_a = 0.0;
  double final_avg_cos_sim_b = 0.0;
  double final_spectral_entropy_a = 0.0;
  double final_spectral_entropy_b = 0.0;
  std::vector<DeltaRow> deltas;
};

struct ComparisonReport {
  std::string run_a;
  std::string run_b;
  int activation_threshold = 0;  // ceil(0.05 * N)
  std::vector<LayerComparison> layers;
  double final_accuracy_a = 0.0;
  double final_accuracy_b = 0.0;
};

/// Compares two finished runs. Rejects runs whose task spec, expert count,
/// top-k, layer count or step count differ.
ComparisonReport compare_runs(const std::filesystem::path& run_a,
                              const std::filesystem::path& run_b);

std::string report_to_json(const ComparisonReport& report);

}  // namespace gatepro
