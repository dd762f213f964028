#pragma once

#include <cstdint>

namespace geopo {

// splitmix64. Chosen over std::mt19937_64 because the whole pipeline must be
// byte-reproducible and we derive many short, independent streams (one per
// tree expansion); splitmix is cheap to seed and its mixing function doubles
// as the seed-derivation hash.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Lemire multiply-shift; bias is < 2^-64 and,
  // more to the point, deterministic.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  bool coin() { return (next() & 1u) != 0; }

 private:
  std::uint64_t state_;
};

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

// Order-sensitive combination of seed words, used to derive substream seeds
// (per tree, per expansion, per suite index). Collisions across the handful
// of call sites we have are not a practical concern.
inline std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b) {
  return detail::mix64(a + 0x9e3779b97f4a7c15ull * (b + 1));
}

inline std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b,
                                 std::uint64_t c) {
  return derive_seed(derive_seed(a, b), c);
}

}  // namespace geopo
