#include "gatepro/compare.hpp"

#include <cmath>
#include <map>

#include "gatepro/train.hpp"
#include "json.hpp"

namespace gatepro {

std::optional<long> steps_to_activation(const std::vector<MetricsRow>& rows,
                                        int layer, int threshold) {
  std::optional<long> first;
  for (const MetricsRow& row : rows) {
    if (row.layer != layer) continue;
    if (row.zero_token_count <= threshold) {
      if (!first || row.step < *first) first = row.step;
    }
  }
  return first;
}

ComparisonReport compare_runs(const std::filesystem::path& run_a,
                              const std::filesystem::path& run_b) {
  const RunConfig cfg_a = load_run_config(run_a);
  const RunConfig cfg_b = load_run_config(run_b);
  if (cfg_a.n_experts != cfg_b.n_experts || cfg_a.top_k != cfg_b.top_k ||
      cfg_a.layers != cfg_b.layers || cfg_a.steps != cfg_b.steps) {
    throw ConfigError("compare: runs differ in n_experts, top_k, layers or steps");
  }
  if (cfg_a.task.n_clusters != cfg_b.task.n_clusters ||
      cfg_a.task.dim != cfg_b.task.dim ||
      cfg_a.task.n_classes != cfg_b.task.n_classes ||
      cfg_a.task.cluster_spread != cfg_b.task.cluster_spread ||
      cfg_a.task.seed != cfg_b.task.seed) {
    throw ConfigError("compare: runs used different task specs");
  }

  const std::vector<MetricsRow> rows_a = read_metrics_log(run_a / "metrics.jsonl");
  const std::vector<MetricsRow> rows_b = read_metrics_log(run_b / "metrics.jsonl");

  ComparisonReport report;
  report.run_a = run_a.string();
  report.run_b = run_b.string();
  report.activation_threshold =
      static_cast<int>(std::ceil(0.05 * cfg_a.n_experts));

  for (int layer = 0; layer < cfg_a.layers; ++layer) {
    LayerComparison lc;
    lc.layer = layer;
    lc.steps_to_activation_a =
        steps_to_activation(rows_a, layer, report.activation_threshold);
    lc.steps_to_activation_b =
        steps_to_activation(rows_b, layer, report.activation_threshold);

    std::map<long, const MetricsRow*> by_step_b;
    for (const MetricsRow& row : rows_b) {
      if (row.layer == layer) by_step_b[row.step] = &row;
    }

    const MetricsRow* last_a = nullptr;
    const MetricsRow* last_b = nullptr;
    for (const MetricsRow& a : rows_a) {
      if (a.layer != layer) continue;
      if (!last_a || a.step > last_a->step) last_a = &a;
      const auto it = by_step_b.find(a.step);
      if (it == by_step_b.end()) continue;
      const MetricsRow& b = *it->second;
      DeltaRow d;
      d.step = a.step;
      d.zero_token_count =
          static_cast<double>(a.zero_token_count - b.zero_token_count);
      d.avg_cos_sim = a.avg_cos_sim - b.avg_cos_sim;
      d.avg_angle = a.avg_angle - b.avg_angle;
      d.spectral_entropy = a.spectral_entropy - b.spectral_entropy;
      d.task_loss = a.task_loss - b.task_loss;
      d.accuracy_estimate = a.accuracy_estimate - b.accuracy_estimate;
      lc.deltas.push_back(d);
    }
    for (const auto& [step, row] : by_step_b) {
      if (!last_b || step > last_b->step) last_b = row;
    }

    if (!last_a || !last_b) {
      throw IoError("compare: no metrics rows for layer " +
                    std::to_string(layer));
    }
    lc.final_avg_cos_sim_a = last_a->avg_cos_sim;
    lc.final_avg_cos_sim_b = last_b->avg_cos_sim;
    lc.final_spectral_entropy_a = last_a->spectral_entropy;
    lc.final_spectral_entropy_b = last_b->spectral_entropy;
    if (layer == cfg_a.layers - 1) {
      report.final_accuracy_a = last_a->accuracy_estimate;
      report.final_accuracy_b = last_b->accuracy_estimate;
    }
    report.layers.push_back(std::move(lc));
  }
  return report;
}

std::string report_to_json(const ComparisonReport& report) {
  nlohmann::ordered_json j;
  j["run_a"] = report.run_a;
  j["run_b"] = report.run_b;
  j["activation_threshold"] = report.activation_threshold;
  j["final_accuracy_a"] = report.final_accuracy_a;
  j["final_accuracy_b"] = report.final_accuracy_b;
  j["layers"] = nlohmann::ordered_json::array();
  for (const LayerComparison& lc : report.layers) {
    nlohmann::ordered_json lj;
    lj["layer"] = lc.layer;
    if (lc.steps_to_activation_a) {
      lj["steps_to_activation_a"] = *lc.steps_to_activation_a;
    } else {
      lj["steps_to_activation_a"] = nullptr;
    }
    if (lc.steps_to_activation_b) {
      lj["steps_to_activation_b"] = *lc.steps_to_activation_b;
    } else {
      lj["steps_to_activation_b"] = nullptr;
    }
    lj["final_avg_cos_sim_a"] = lc.final_avg_cos_sim_a;
    lj["final_avg_cos_sim_b"] = lc.final_avg_cos_sim_b;
    lj["final_spectral_entropy_a"] = lc.final_spectral_entropy_a;
    lj["final_spectral_entropy_b"] = lc.final_spectral_entropy_b;
    lj["deltas"] = nlohmann::ordered_json::array();
    for (const DeltaRow& d : lc.deltas) {
      nlohmann::ordered_json dj;
      dj["step"] = d.step;
      dj["zero_token_count"] = d.zero_token_count;
      dj["avg_cos_sim"] = d.avg_cos_sim;
      dj["avg_angle"] = d.avg_angle;
      dj["spectral_entropy"] = d.spectral_entropy;
      dj["task_loss"] = d.task_loss;
      dj["accuracy_estimate"] = d.accuracy_estimate;
      lj["deltas"].push_back(std::move(dj));
    }
    j["layers"].push_back(std::move(lj));
  }
  return j.dump(2);
}

}  // namespace gatepro
