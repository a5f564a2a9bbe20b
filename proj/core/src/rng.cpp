#include "commlim/rng.hpp"

#include <cmath>
#include <numbers>

namespace commlim {

std::uint64_t derive_key(std::uint64_t parent, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t key = mix64(parent ^ 0xd1b54a32d192ed03ULL);
  for (std::uint64_t index : path) {
    key = mix64(key ^ mix64(index + 0x8cb92ba72f3d8dd7ULL));
  }
  return key;
}

double CounterRng::normal_at(std::uint64_t counter) const noexcept {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform_at(2 * counter);
  const double u2 = uniform_at(2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t CounterRng::below(std::uint64_t bound) noexcept {
  if (bound <= 1) return 0;
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = max() - max() % bound;
  for (;;) {
    const std::uint64_t r = (*this)();
    if (r < limit) return r % bound;
  }
}

}  // namespace commlim
