#pragma once

#include <cstdint>

namespace sonograin {

/// SplitMix64 (Steele, Lea & Flood 2014). 64-bit state, one output per call, identical
/// on every platform. below(n) maps a single output to [0, n) by 128-bit multiply-high,
/// so every draw consumes exactly one output; the bias is below n / 2^64.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace sonograin
