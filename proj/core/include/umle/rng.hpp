#pragma once

#include <cstdint>

namespace umle {

// Counter-based deterministic RNG. Every random decision in the pipeline is a
// pure function of (seed, stream, counter), so training can resume from any
// iteration without replaying or serializing generator state.

enum class RngStream : std::uint64_t {
  Init = 0,           // parameter initialization
  SampleLow = 1,      // unpaired sampling, low domain
  SampleNormal = 2,   // unpaired sampling, normal domain
  PatchDefault = 9,   // standalone extract_local_patch calls
  PatchRealN = 10,    // local-patch offsets, one stream per role
  PatchFakeN = 11,
  PatchRealL = 12,
  PatchFakeL = 13,
  PatchGFakeN = 14,
  PatchGFakeL = 15,
  Extractor = 20,     // frozen perceptual extractor weights
  Bench = 30,         // synthetic inputs for FPS measurement
};

namespace detail {
// splitmix64 finalizer; full 64-bit avalanche.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

// One draw keyed on (seed, stream, counter).
constexpr std::uint64_t rng_u64(std::uint64_t seed, RngStream stream, std::uint64_t counter) {
  std::uint64_t h = detail::mix64(seed);
  h = detail::mix64(h ^ static_cast<std::uint64_t>(stream));
  return detail::mix64(h ^ counter);
}

// Uniform double in [0, 1) from the top 53 bits.
constexpr double rng_unit(std::uint64_t seed, RngStream stream, std::uint64_t counter) {
  return static_cast<double>(rng_u64(seed, stream, counter) >> 11) * 0x1.0p-53;
}

// Sequential view over one stream, for bulk draws (e.g. weight init).
class RngSequence {
 public:
  RngSequence(std::uint64_t seed, RngStream stream, std::uint64_t start = 0)
      : seed_(seed), stream_(stream), counter_(start) {}

  std::uint64_t next_u64() { return rng_u64(seed_, stream_, counter_++); }
  double next_unit() { return rng_unit(seed_, stream_, counter_++); }
  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  RngStream stream_;
  std::uint64_t counter_;
};

}  // namespace umle
