// rng.hpp -- seeded random number generation with fully specified algorithms.
//
// std::shuffle and the <random> distribution objects are implementation
// defined, which would break the bit-reproducibility contract, so bounded
// integers, unit reals, normals and shuffling are implemented here on top of
// std::mt19937_64 (whose output stream IS fully specified by the standard).
#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace bbdrop {

// Derives an independent stream seed from a master seed (splitmix64 step).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0,1), 53-bit resolution.
  double next_unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in [0,n). Rejection sampling keeps the draw unbiased.
  std::uint64_t bounded(std::uint64_t n);

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal();

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(bounded(i + 1));
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace bbdrop
