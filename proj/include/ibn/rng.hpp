#pragma once
#include <cstdint>
#include <random>
#include <string_view>

namespace ibn {

// Derives a child seed from a root seed and a stream name (FNV-1a over the
// name, then a splitmix64 finalizer).  Children with distinct names are
// decorrelated; the same (root, name) pair always yields the same seed.
uint64_t mix_seed(uint64_t root, std::string_view name);

// Seeded generator with stdlib-independent uniform/normal draws so that a
// given seed produces the same stream on any conforming toolchain.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(seed) {}

  // New generator keyed off this one's *seed* (not its consumption state).
  Rng substream(std::string_view name) const { return Rng(mix_seed(seed_, name)); }

  uint64_t bits() { return gen_(); }

  // [0, 1)
  double uniform() { return double(bits() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller on own uniforms.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // inclusive bounds
  int uniform_int(int lo, int hi) {
    return lo + int(bits() % uint64_t(hi - lo + 1));
  }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace ibn
