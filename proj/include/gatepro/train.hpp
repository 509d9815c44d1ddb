#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>

#include "gatepro/checkpoint.hpp"
#include "gatepro/config.hpp"

namespace gatepro {

struct TrainResult {
  std::filesystem::path run_dir;
  long steps_run = 0;
  double final_accuracy_estimate = 0.0;
};

/// Invoked after each step's backward pass (before the optimizer update);
/// lets callers inspect routing decisions without a second training loop.
using StepObserver =
    std::function<void(long step, GateMode mode, const BackwardResult&)>;

/// Runs the full training loop: per step, resolve the mode from the
/// schedule, refresh per-layer similarity caches in gatepro mode, draw a
/// batch, backprop, Adam. Metrics are appended to metrics.jsonl every
/// metrics_every steps (one row per layer); a checkpoint is written at every
/// schedule boundary (step_<t>.ckpt, the state before executing step t) and
/// at the end (final.ckpt). Deterministic given the config.
TrainResult train(const RunConfig& cfg, const StepObserver& observer = {});

/// Continues training from a checkpoint under a (possibly re-scheduled)
/// config. Model shape and task must match the checkpoint; the RNG resumes
/// from the stored state, so cfg.seed is ignored.
TrainResult train_from(const RunConfig& cfg, const Checkpoint& start,
                       const StepObserver& observer = {});

/// Fraction of freshly drawn tokens classified correctly by the checkpoint's
/// readout argmax. Routing uses the mode the schedule prescribes at the
/// checkpoint's step.
double eval_accuracy(const std::filesystem::path& ckpt_path,
                     const SyntheticTaskSpec& spec, long n_tokens,
                     std::uint64_t seed);

/// Config echo written by train into <run_dir>/config.txt.
RunConfig load_run_config(const std::filesystem::path& run_dir);

}  // namespace gatepro
