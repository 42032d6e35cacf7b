#pragma once

#include <cstdint>
#include <random>

namespace ksobol {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of the independent stream `stream` derived from a user seed.
/// Rule: splitmix64(splitmix64(seed) ^ (stream + 1) * golden-ratio constant).
/// Streams are used for input columns, Pick-Freeze copies and auxiliary
/// samples, so adding a consumer never perturbs existing streams.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(seed) ^ ((stream + 1) * 0x9E3779B97F4A7C15ULL));
}

/// mt19937_64 with a platform-independent mapping to [0, 1).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : engine_(stream_seed(seed, stream)) {}

  double uniform01() noexcept {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Open interval (0, 1), for inverse-CDF sampling.
  double uniform_open() noexcept {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t next() noexcept { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ksobol
