#pragma once

// Counter-based Gaussian noise. Every draw is a pure function of
// (seed, channel, index...), so the noise applied to layer k does not depend on
// how many draws happened before it. Open-loop and closed-loop runs sharing a
// seed therefore see the same process noise layer by layer.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace stiffprint {

enum class NoiseChannel : std::uint64_t {
  kProcess = 0x70726f63ULL,
  kObservation = 0x6f627376ULL,
  kTrial = 0x7472696cULL,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                        std::uint64_t c, std::uint64_t d) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  h = splitmix64(h ^ c);
  return splitmix64(h ^ d);
}

/// Uniform double in the open interval (0, 1).
inline double to_unit_open(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Seed of an independent sub-stream, e.g. one Monte-Carlo trial.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return hash_key(seed, static_cast<std::uint64_t>(NoiseChannel::kTrial), index, 0, 0);
}

class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  /// Number of standard normals drawn so far (diagnostic only).
  std::uint64_t draws() const { return draws_; }

  /// Standard normal variate keyed by (channel, i, j). Box-Muller on two
  /// hashed uniforms.
  double standard_normal(NoiseChannel channel, std::uint64_t i, std::uint64_t j) {
    ++draws_;
    const auto ch = static_cast<std::uint64_t>(channel);
    const double u1 = to_unit_open(hash_key(seed_, ch, i, j, 0));
    const double u2 = to_unit_open(hash_key(seed_, ch, i, j, 1));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Process noise draw for layer `layer` (1-based); `attempt` > 0 on redraws.
  double process(std::uint64_t layer, std::uint64_t attempt = 0) {
    return standard_normal(NoiseChannel::kProcess, layer, attempt);
  }

  /// Observation noise draw for reading `reading` taken at stage `stage`.
  double observation(std::uint64_t stage, std::uint64_t reading) {
    return standard_normal(NoiseChannel::kObservation, stage, reading);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
};

}  // namespace stiffprint
