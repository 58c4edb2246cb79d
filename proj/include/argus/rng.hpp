#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>
#include <vector>

namespace argus {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Derives an independent stream seed from a base seed and a stream tag.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

inline uint64_t derive_seed(uint64_t seed, std::string_view tag) {
  return derive_seed(seed, fnv1a64(tag));
}

/// Deterministic generator. mt19937_64 output is pinned by the standard; the
/// distributions below are hand rolled so that sequences are identical across
/// platforms and standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n). n must be nonzero.
  uint64_t below(uint64_t n) {
    const uint64_t lim =
        std::numeric_limits<uint64_t>::max() -
        std::numeric_limits<uint64_t>::max() % n;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= lim);
    return x % n;
  }

  /// Integer in [lo, hi], bounds inclusive.
  int64_t range(int64_t lo, int64_t hi) {
    return lo + int64_t(below(uint64_t(hi - lo + 1)));
  }

  /// Box-Muller, one value per call so the stream position stays predictable.
  double normal(double mean = 0.0, double sd = 1.0) {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double two_pi = 6.283185307179586476925286766559;
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    return mean + sd * z;
  }

  /// normal(mean, sd) restricted to mean +- cut*sd by rejection.
  double trunc_normal(double mean, double sd, double cut = 2.0) {
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= cut) return mean + sd * z;
    }
  }

  /// Seeded Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace argus
