#pragma once

#include <cstdint>
#include <filesystem>

#include "gatepro/config.hpp"
#include "gatepro/moe.hpp"

namespace gatepro {

/// Full training state: parameters, optimizer moments, RNG position and the
/// config echo. `step` is the next step index to execute on resume.
struct Checkpoint {
  RunConfig config;
  long step = 0;
  std::uint64_t rng_state = 0;
  MoEStackParams params;
  AdamState adam;
};

/// Binary GATEPRO-CKPT-v1 file: a text header (step, rng, adam_t and the
/// config echo) followed by every tensor's raw 64-bit values in declared
/// order — params, then Adam m, then Adam v.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gatepro
