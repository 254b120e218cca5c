#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace crowdbin {

/// SplitMix64 finalizer. Used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Stream seed for (seed, epoch) pairs; distinct epochs give unrelated
/// streams.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t epoch) noexcept;

/// Seedable generator with a platform-independent output sequence.
///
/// Wraps std::mt19937_64, whose output is fixed by the standard, and draws
/// bounded integers by rejection instead of std::uniform_int_distribution
/// (whose algorithm is implementation-defined). Schedules and data splits
/// are therefore reproducible across compilers and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_below(std::uint64_t n);

  /// Fisher-Yates shuffle driven by uniform_below.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace crowdbin
