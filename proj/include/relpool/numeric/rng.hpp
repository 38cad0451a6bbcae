// Counter-based pseudo-random generator.
//
// Draw n (0-based) of a stream with seed s is
//     u64(s, n) = mix64(s + (n + 1) * 0x9E3779B97F4A7C15)
// where mix64 is the SplitMix64 finalizer. Uniform doubles take the top 53
// bits; normals use Box-Muller on two consecutive uniforms (the sine branch is
// discarded so each normal consumes exactly two draws). Integer bounds use
// Lemire's multiply-shift with rejection. Everything is defined on fixed-width
// integers, so streams are identical across compilers and platforms; only the
// libm calls in normal() can differ in the last ulp between C libraries.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace relpool {

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  /// Independent child stream; does not advance this one.
  Rng fork(std::uint64_t stream_id) const;

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

  static std::uint64_t mix64(std::uint64_t z);

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace relpool
