#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace commlim {

// Stateless 64-bit mixer (the SplitMix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives a child key from a parent key and a list of stream indices, e.g.
// derive_key(seed, {replication, sensor}). Order matters; the mapping is a
// fixed function so results never depend on execution order.
std::uint64_t derive_key(std::uint64_t parent, std::initializer_list<std::uint64_t> path) noexcept;

// Counter-based generator: the i-th output of stream `key` is a pure
// function of (key, i). Random access through at(); sequential use through
// operator() which also satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type at(std::uint64_t counter) const noexcept {
    return mix64(key_ ^ mix64(counter + 0x632be59bd9b4e019ULL));
  }
  result_type operator()() noexcept { return at(counter_++); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform_at(std::uint64_t counter) const noexcept {
    return static_cast<double>(at(counter) >> 11) * 0x1.0p-53;
  }
  double uniform() noexcept { return uniform_at(counter_++); }

  // Standard normal from the counter pair (2c, 2c + 1) via Box-Muller.
  double normal_at(std::uint64_t counter) const noexcept;

  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace commlim
