#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rwpatch {

/// 64-bit FNV-1a; stable across platforms, unlike std::hash.
constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Deterministic stream keyed by (global seed, stream name, index). Two streams
/// with different keys are independent; the same key always replays the same
/// sequence regardless of what other streams did. Counts its draws so callers
/// can assert a stream was never touched.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0)
      : engine_(splitmix64(splitmix64(seed ^ fnv1a(name)) + index)) {}

  float uniform(float lo = 0.f, float hi = 1.f) {
    ++draws_;
    return std::uniform_real_distribution<float>(lo, hi)(engine_);
  }
  float normal(float mean, float stddev) {
    ++draws_;
    return std::normal_distribution<float>(mean, stddev)(engine_);
  }
  /// Uniform integer in [lo, hi].
  std::uint64_t integer(std::uint64_t lo, std::uint64_t hi) {
    ++draws_;
    return std::uniform_int_distribution<std::uint64_t>(lo, hi)(engine_);
  }
  bool coin() { return integer(0, 1) == 1; }

  std::uint64_t draws() const { return draws_; }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t draws_ = 0;
};

}  // namespace rwpatch
