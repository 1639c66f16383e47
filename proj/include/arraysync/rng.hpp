#pragma once

#include <cstdint>
#include <limits>

namespace arraysync {

// splitmix64: tiny counter-based engine. Every stochastic draw in a scenario
// gets its own stream keyed by (seed, trial, node, iteration, purpose), so a
// single draw is reproducible in isolation and node update order never
// matters. std distributions run on top of this.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

enum class Draw : std::uint64_t {
  network = 1,     // topology sampling
  init = 2,        // initial frequency/phase
  transition = 3,  // per-iteration drift and jitter
  observe = 4,     // estimation noise
};

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

inline std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t trial,
                                 std::uint64_t node, std::uint64_t iteration,
                                 Draw purpose) {
  using detail::mix64;
  std::uint64_t h = mix64(base_seed);
  h = mix64(h ^ mix64(trial + 0x100000001ull));
  h = mix64(h ^ mix64(node + 0x200000002ull));
  h = mix64(h ^ mix64(iteration + 0x300000003ull));
  h = mix64(h ^ mix64(static_cast<std::uint64_t>(purpose) + 0x400000004ull));
  return h;
}

inline SplitMix64 stream_for(std::uint64_t base_seed, std::uint64_t trial,
                             std::uint64_t node, std::uint64_t iteration,
                             Draw purpose) {
  return SplitMix64(derive_seed(base_seed, trial, node, iteration, purpose));
}

}  // namespace arraysync
