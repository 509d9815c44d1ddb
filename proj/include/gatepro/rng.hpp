#pragma once

#include <cstdint>

namespace gatepro {

/// splitmix64 generator. The full state is one 64-bit word, so identical
/// seeds give identical streams on every platform and the state can be
/// checkpointed as a single integer.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform draw in [0,1) from the top 53 bits.
  double next_uniform();

  /// Standard normal via Box-Muller on two uniform draws.
  double next_gaussian();

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_ = 0;
};

}  // namespace gatepro
