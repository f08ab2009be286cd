#pragma once

#include <cstdint>

namespace landmark {

// SplitMix64 (Steele, Lea, Flood).  Fully specified bit-for-bit, so every
// stream derived from it reproduces identically across platforms and runs.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Collapses a list of stream keys into one seed.  Used to derive independent
// substreams (trial seeds, probe streams) from a single master seed.
inline std::uint64_t derive_seed(std::uint64_t seed) { return seed; }

template <typename... Keys>
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key, Keys... rest) {
  std::uint64_t s = seed ^ (key + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
  splitmix64_next(s);
  return derive_seed(s, static_cast<std::uint64_t>(rest)...);
}

// Counter-style generator: construct from a derived seed, draw a stream.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : state_(seed) {
    // one warm-up step decorrelates adjacent seeds
    splitmix64_next(state_);
  }

  std::uint64_t next_u64() { return splitmix64_next(state_); }

  // uniform double in [0, 1)
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform integer in [0, bound) by rejection; bound >= 1
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t draw;
    do {
      draw = next_u64();
    } while (draw >= limit);
    return draw % bound;
  }

 private:
  std::uint64_t state_;
};

}  // namespace landmark
