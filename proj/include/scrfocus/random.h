#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace scrfocus {

// SplitMix64 finalizer. Used to derive independent stream seeds from tuples
// of integers (global seed, pass, image id, cell, ...).
inline uint64_t Mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t HashSeed(std::initializer_list<uint64_t> parts) {
  uint64_t h = 0x5eedf0c05ULL;
  for (const uint64_t p : parts) {
    h = Mix64(h ^ Mix64(p));
  }
  return h;
}

// Seeded generator with platform-independent derived distributions. The
// standard library distributions are implementation defined, so uniform
// and normal draws are computed here directly from the 64-bit engine.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t NextU64() { return engine_(); }

  // Uniform in [0, n). n must be > 0.
  uint64_t UniformInt(uint64_t n) {
    // Rejection to remove modulo bias.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Uniform in [0, 1) with 53 random bits.
  double Uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Standard normal via Box-Muller. The second value is cached.
  double Normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace scrfocus
