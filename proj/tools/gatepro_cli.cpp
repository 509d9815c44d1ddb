#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "gatepro/compare.hpp"
#include "gatepro/checkpoint.hpp"
#include "gatepro/config.hpp"
#include "gatepro/metrics_log.hpp"
#include "gatepro/train.hpp"

namespace {

void write_or_print(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << "\n";
    return;
  }
  std::ofstream out(out_path);
  if (!out) {
    throw gatepro::IoError("cannot write: " + out_path);
  }
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale MoE lab: baseline top-k routing vs GatePro competitive gating"};
  app.require_subcommand(1);

  std::string config_path;
  std::string resume_path;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a run from a config file");
  train_cmd->add_option("--config", config_path, "run config file")->required();
  train_cmd->add_option("--resume", resume_path, "continue from this checkpoint");

  std::string run_a;
  std::string run_b;
  std::string compare_out;
  CLI::App* compare_cmd = app.add_subcommand("compare", "Compare two finished runs");
  compare_cmd->add_option("--a", run_a, "first run directory")->required();
  compare_cmd->add_option("--b", run_b, "second run directory")->required();
  compare_cmd->add_option("--out", compare_out, "write the JSON report here");

  std::string eval_ckpt;
  long eval_tokens = 0;
  std::uint64_t eval_seed = 0;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Held-out accuracy of a checkpoint");
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--tokens", eval_tokens, "number of held-out tokens")->required();
  eval_cmd->add_option("--seed", eval_seed, "evaluation stream seed")->required();

  CLI::App* metrics_cmd = app.add_subcommand("metrics", "Metrics log utilities");
  metrics_cmd->require_subcommand(1);
  std::string export_run;
  std::string export_format;
  std::string export_out;
  CLI::App* export_cmd =
      metrics_cmd->add_subcommand("export", "Export metrics.jsonl");
  export_cmd->add_option("--run", export_run, "run directory")->required();
  export_cmd->add_option("--format", export_format, "output format (csv)")->required();
  export_cmd->add_option("--out", export_out, "write here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) {
      const gatepro::RunConfig cfg = gatepro::load_config(config_path);
      gatepro::TrainResult result;
      if (resume_path.empty()) {
        result = gatepro::train(cfg);
      } else {
        const gatepro::Checkpoint start = gatepro::load_checkpoint(resume_path);
        result = gatepro::train_from(cfg, start);
      }
      std::cout << "run complete: " << result.run_dir.string() << " ("
                << result.steps_run << " steps, final batch accuracy "
                << result.final_accuracy_estimate << ")\n";
    } else if (compare_cmd->parsed()) {
      const gatepro::ComparisonReport report = gatepro::compare_runs(run_a, run_b);
      write_or_print(gatepro::report_to_json(report), compare_out);
    } else if (eval_cmd->parsed()) {
      const gatepro::Checkpoint ckpt = gatepro::load_checkpoint(eval_ckpt);
      const double acc = gatepro::eval_accuracy(eval_ckpt, ckpt.config.task,
                                                eval_tokens, eval_seed);
      std::cout << acc << "\n";
    } else if (export_cmd->parsed()) {
      if (export_format != "csv") {
        throw gatepro::ConfigError("metrics export: unsupported format '" +
                                   export_format + "' (only csv)");
      }
      const auto rows = gatepro::read_metrics_log(
          std::filesystem::path(export_run) / "metrics.jsonl");
      write_or_print(gatepro::metrics_csv(rows), export_out);
    }
  } catch (const gatepro::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const gatepro::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const gatepro::NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
