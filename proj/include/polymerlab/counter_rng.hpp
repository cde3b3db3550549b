#pragma once

#include <cstdint>

namespace polymerlab {

// Counter-based random streams. Every variate is a pure function of a key
// chain, so draws never depend on iteration order or thread assignment.

/// 64-bit finalizer (splitmix64 / Stafford variant 13).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Folds one more word into a key.
constexpr std::uint64_t mix_key(std::uint64_t key, std::uint64_t word) noexcept {
  return mix64(key ^ mix64(word + 0x632be59bd9b4e019ULL));
}

/// Uniform double in the open interval (0, 1) from 64 random bits.
constexpr double to_open_unit(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Unbiased-enough integer in [0, n) for small n (multiply-shift on 32 bits).
constexpr std::uint32_t to_range(std::uint64_t bits, std::uint32_t n) noexcept {
  return static_cast<std::uint32_t>(((bits >> 32) * n) >> 32);
}

/// A keyed stream: draw(i) is the i-th variate of the stream.
class CounterStream {
 public:
  constexpr explicit CounterStream(std::uint64_t key) noexcept : key_(key) {}
  constexpr std::uint64_t draw(std::uint64_t counter) const noexcept {
    return mix_key(key_, counter);
  }
  constexpr std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

}  // namespace polymerlab
