#include "gatepro/metrics_log.hpp"

#include <fstream>

#include "json.hpp"

namespace gatepro {

namespace {

nlohmann::ordered_json row_to_json(const MetricsRow& row) {
  nlohmann::ordered_json j;
  j["step"] = row.step;
  j["layer"] = row.layer;
  j["mode"] = row.mode;
  j["balance_loss_on"] = row.balance_loss_on;
  j["zero_token_count"] = row.zero_token_count;
  j["avg_cos_sim"] = row.avg_cos_sim;
  j["avg_angle"] = row.avg_angle;
  j["spectral_entropy"] = row.spectral_entropy;
  j["task_loss"] = row.task_loss;
  j["balance_loss"] = row.balance_loss;
  j["accuracy_estimate"] = row.accuracy_estimate;
  return j;
}

}  // namespace

MetricsRow make_metrics_row(const MetricsRecord& record, double task_loss,
                            double balance_loss, double accuracy_estimate) {
  MetricsRow row;
  row.step = record.step;
  row.layer = record.layer;
  row.mode = to_string(record.mode);
  row.balance_loss_on = record.balance_loss_on;
  row.zero_token_count = record.zero_token_count;
  row.avg_cos_sim = record.avg_cosine_similarity;
  row.avg_angle = record.avg_angle_radians;
  row.spectral_entropy = record.spectral_entropy;
  row.task_loss = task_loss;
  row.balance_loss = balance_loss;
  row.accuracy_estimate = accuracy_estimate;
  return row;
}

std::string to_json_line(const MetricsRow& row) {
  return row_to_json(row).dump();
}

MetricsRow row_from_json_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("malformed metrics row: " + std::string(e.what()));
  }
  try {
    MetricsRow row;
    row.step = j.at("step").get<long>();
    row.layer = j.at("layer").get<int>();
    row.mode = j.at("mode").get<std::string>();
    row.balance_loss_on = j.at("balance_loss_on").get<bool>();
    row.zero_token_count = j.at("zero_token_count").get<int>();
    row.avg_cos_sim = j.at("avg_cos_sim").get<double>();
    row.avg_angle = j.at("avg_angle").get<double>();
    row.spectral_entropy = j.at("spectral_entropy").get<double>();
    row.task_loss = j.at("task_loss").get<double>();
    row.balance_loss = j.at("balance_loss").get<double>();
    row.accuracy_estimate = j.at("accuracy_estimate").get<double>();
    return row;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("metrics row missing field: " + std::string(e.what()));
  }
}

std::vector<MetricsRow> read_metrics_log(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) {
    // An ifstream on a directory reads as empty on POSIX; fail loudly instead.
    throw IoError("metrics log is a directory: " + path.string());
  }
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read metrics log: " + path.string());
  }
  std::vector<MetricsRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(row_from_json_line(line));
  }
  return rows;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out =
      "step,layer,mode,balance_loss_on,zero_token_count,avg_cos_sim,"
      "avg_angle,spectral_entropy,task_loss,balance_loss,accuracy_estimate\n";
  for (const MetricsRow& row : rows) {
    const nlohmann::ordered_json j = row_to_json(row);
    bool first = true;
    for (const auto& item : j.items()) {
      if (!first) out += ",";
      first = false;
      if (item.value().is_string()) {
        out += item.value().get<std::string>();
      } else {
        out += item.value().dump();
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace gatepro
