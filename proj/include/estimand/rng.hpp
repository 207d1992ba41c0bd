#pragma once

#include <cstdint>
#include <limits>

namespace estimand {

/// SplitMix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream key from a seed and a chain of counters,
/// e.g. stream_key(seed, replicate, trial, row).
constexpr std::uint64_t stream_key(std::uint64_t seed) { return mix64(seed); }

template <class... Rest>
constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t counter, Rest... rest) {
  return stream_key(mix64(seed ^ mix64(counter + 0x632be59bd9b4e019ULL)), rest...);
}

/// Small counter-seeded generator (SplitMix64). Each simulated row, bootstrap
/// replicate or bench replicate gets its own instance keyed by its counter,
/// so results do not depend on execution order.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  constexpr explicit CounterRng(std::uint64_t key) : state_(key) {}

  template <class... Counters>
  static constexpr CounterRng for_stream(std::uint64_t seed, Counters... counters) {
    return CounterRng(stream_key(seed, static_cast<std::uint64_t>(counters)...));
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double on [0, 1) with 53 random bits.
  constexpr double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

}  // namespace estimand
