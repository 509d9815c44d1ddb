#include "gatepro/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "gatepro/metrics.hpp"
#include "gatepro/metrics_log.hpp"
#include "gatepro/rng.hpp"
#include "gatepro/task.hpp"

namespace gatepro {

namespace {

void require_same_shape(const RunConfig& cfg, const RunConfig& from) {
  if (cfg.n_experts != from.n_experts || cfg.dim != from.dim ||
      cfg.hidden != from.hidden || cfg.layers != from.layers ||
      cfg.task.n_classes != from.task.n_classes) {
    throw ConfigError("resume: model shape differs from the checkpoint");
  }
  if (cfg.task.n_clusters != from.task.n_clusters ||
      cfg.task.dim != from.task.dim ||
      cfg.task.cluster_spread != from.task.cluster_spread ||
      cfg.task.seed != from.task.seed) {
    throw ConfigError("resume: task spec differs from the checkpoint");
  }
}

TrainResult run_loop(const RunConfig& cfg, MoEStackParams params,
                     AdamState adam, Rng rng, long start_step,
                     const StepObserver& observer) {
  validate_config(cfg);
  if (cfg.out_dir.empty()) {
    throw ConfigError("config: out_dir is required for training");
  }
  if (start_step >= cfg.steps) {
    throw ConfigError("resume: checkpoint step is not before cfg.steps");
  }

  const std::filesystem::path run_dir(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(run_dir, ec);
  if (ec) {
    throw IoError("cannot create run directory: " + run_dir.string() + " (" +
                  ec.message() + ")");
  }

  {
    std::ofstream cfg_out(run_dir / "config.txt");
    if (!cfg_out) {
      throw IoError("cannot write: " + (run_dir / "config.txt").string());
    }
    cfg_out << config_to_text(cfg);
  }

  std::ofstream log(run_dir / "metrics.jsonl");
  if (!log) {
    throw IoError("cannot write: " + (run_dir / "metrics.jsonl").string());
  }

  const SyntheticTask task(cfg.task);
  GateProConfig gcfg;
  gcfg.lambda = cfg.lambda;
  gcfg.k = cfg.top_k;

  std::set<long> boundaries;
  for (const HotSwapEntry& e : cfg.schedule.entries) {
    if (e.start_step > start_step && e.start_step < cfg.steps) {
      boundaries.insert(e.start_step);
    }
  }

  const bool balance_on = cfg.balance_coeff > 0.0;
  double last_accuracy = 0.0;

  for (long step = start_step; step < cfg.steps; ++step) {
    if (boundaries.count(step)) {
      Checkpoint ckpt{cfg, step, rng.state(), params, adam};
      save_checkpoint(run_dir / ("step_" + std::to_string(step) + ".ckpt"),
                      ckpt);
    }

    const GateMode mode = mode_at(cfg.schedule, step);
    const Batch batch = task.gen_batch(rng, cfg.batch_size);

    std::vector<SimilarityMatrix> caches;
    if (mode == GateMode::gatepro) {
      caches.reserve(params.n_layers());
      for (const MoELayerParams& lp : params.layers) {
        caches.push_back(gate_similarity(lp.gating));
      }
    }

    const BackwardResult result =
        stack_backward(params, batch, mode, gcfg, caches, cfg.balance_coeff);
    if (!std::isfinite(result.loss)) {
      throw NumericalFailure("non-finite loss", step);
    }
    if (observer) {
      observer(step, mode, result);
    }
    last_accuracy = static_cast<double>(result.correct) /
                    static_cast<double>(cfg.batch_size);

    if (step % cfg.metrics_every == 0) {
      if (!params_finite(params)) {
        throw NumericalFailure("non-finite parameter", step);
      }
      for (std::size_t l = 0; l < params.n_layers(); ++l) {
        const SimilarityMatrix sim =
            mode == GateMode::gatepro
                ? caches[l]
                : gate_similarity(params.layers[l].gating);
        const MetricsRecord record =
            make_metrics_record(step, static_cast<int>(l), result.decisions[l],
                                sim, mode, balance_on);
        log << to_json_line(make_metrics_row(record, result.task_loss,
                                             result.balance_losses[l],
                                             last_accuracy))
            << "\n";
        if (!log) {
          throw IoError("failed writing: " +
                        (run_dir / "metrics.jsonl").string());
        }
      }
    }

    adam_step(params, result.grads, adam, cfg.lr);
  }

  if (!params_finite(params)) {
    throw NumericalFailure("non-finite parameter", cfg.steps - 1);
  }
  Checkpoint final_ckpt{cfg, cfg.steps, rng.state(), std::move(params),
                        std::move(adam)};
  save_checkpoint(run_dir / "final.ckpt", final_ckpt);

  return TrainResult{run_dir, cfg.steps - start_step, last_accuracy};
}

}  // namespace

TrainResult train(const RunConfig& cfg, const StepObserver& observer) {
  validate_config(cfg);
  Rng rng(cfg.seed);
  MoEStackParams params = init_stack(cfg.layers, cfg.n_experts, cfg.dim,
                                     cfg.hidden, cfg.task.n_classes, rng);
  AdamState adam = make_adam_state(params);
  return run_loop(cfg, std::move(params), std::move(adam), rng, 0, observer);
}

TrainResult train_from(const RunConfig& cfg, const Checkpoint& start,
                       const StepObserver& observer) {
  validate_config(cfg);
  require_same_shape(cfg, start.config);
  Rng rng(0);
  rng.set_state(start.rng_state);
  return run_loop(cfg, start.params, start.adam, rng, start.step, observer);
}

double eval_accuracy(const std::filesystem::path& ckpt_path,
                     const SyntheticTaskSpec& spec, long n_tokens,
                     std::uint64_t seed) {
  if (n_tokens < 1) {
    throw ContractViolation("eval_accuracy: n_tokens must be positive");
  }
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const RunConfig& cfg = ckpt.config;
  if (spec.dim != cfg.dim) {
    throw ConfigError("eval: task dim does not match the checkpoint");
  }

  const long mode_step = std::min(ckpt.step, cfg.steps > 0 ? cfg.steps - 1 : 0L);
  const GateMode mode = mode_at(cfg.schedule, std::max(0L, mode_step));
  GateProConfig gcfg;
  gcfg.lambda = cfg.lambda;
  gcfg.k = cfg.top_k;

  std::vector<SimilarityMatrix> caches;
  if (mode == GateMode::gatepro) {
    caches.reserve(ckpt.params.n_layers());
    for (const MoELayerParams& lp : ckpt.params.layers) {
      caches.push_back(gate_similarity(lp.gating));
    }
  }

  const SyntheticTask task(spec);
  Rng rng(seed);
  const Batch batch = task.gen_batch(rng, static_cast<int>(n_tokens));

  long correct = 0;
  for (long t = 0; t < n_tokens; ++t) {
    const StackForwardResult r =
        stack_forward(ckpt.params, batch.inputs[t], mode, gcfg, caches);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < r.logits_out.size(); ++i) {
      if (r.logits_out[i] > r.logits_out[arg]) arg = i;
    }
    if (arg == static_cast<std::size_t>(batch.labels[t])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n_tokens);
}

RunConfig load_run_config(const std::filesystem::path& run_dir) {
  return load_config(run_dir / "config.txt");
}

}  // namespace gatepro
