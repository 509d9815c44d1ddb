#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gatepro/config.hpp"
#include "gatepro/metrics.hpp"

namespace gatepro {

/// One metrics.jsonl line: the per-layer MetricsRecord plus the step's
/// losses and training-batch accuracy.
struct MetricsRow {
  long step = 0;
  int layer = 0;
  std::string mode;
  bool balance_loss_on = false;
  int zero_token_count = 0;
  double avg_cos_sim = 0.0;
  double avg_angle = 0.0;
  double spectral_entropy = 0.0;
  double task_loss = 0.0;
  double balance_loss = 0.0;
  double accuracy_estimate = 0.0;
};

MetricsRow make_metrics_row(const MetricsRecord& record, double task_loss,
                            double balance_loss, double accuracy_estimate);

/// Single JSON object with the fields in logged order (no trailing newline).
std::string to_json_line(const MetricsRow& row);

MetricsRow row_from_json_line(const std::string& line);

std::vector<MetricsRow> read_metrics_log(const std::filesystem::path& path);

/// CSV rendering of the same rows: header plus one line per row.
std::string metrics_csv(const std::vector<MetricsRow>& rows);

}  // namespace gatepro
