#include "gatepro/rng.hpp"

#include <cmath>

namespace gatepro {

std::uint64_t Rng::next_u64() {
  state_ += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double Rng::next_uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_gaussian() {
  const double u1 = next_uniform();
  const double u2 = next_uniform();
  // 1 - u1 lies in (0,1], so the log is finite.
  const double r = std::sqrt(-2.0 * std::log1p(-u1));
  constexpr double two_pi = 6.283185307179586476925286766559;
  return r * std::cos(two_pi * u2);
}

}  // namespace gatepro
