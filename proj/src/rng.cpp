#include "crowdbin/rng.hpp"

#include <cassert>

namespace crowdbin {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t epoch) noexcept {
  return mix64(mix64(seed) ^ (epoch * 0xd1b54a32d192ed03ULL + 1));
}

std::uint64_t Rng::uniform_below(std::uint64_t n) {
  assert(n > 0);
  // Reject the low (2^64 mod n) values so the remainder is unbiased.
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = engine_();
    if (r >= threshold) return r % n;
  }
}

}  // namespace crowdbin
