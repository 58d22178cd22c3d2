#pragma once

// Portable seeded randomness. std::mt19937_64 output is fully specified by
// the standard, but the std distributions are not, so the few transforms we
// need are implemented here to keep generated bytes identical everywhere.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace engage {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for item `index` of a run seeded with `seed`.
  static Rng substream(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finalizer over the pair; cheap and well mixed.
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return Rng(z ^ (z >> 31));
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], unbiased by rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(next());
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % range);
  }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(xs[i - 1], xs[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace engage
