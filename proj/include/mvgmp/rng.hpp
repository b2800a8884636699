#pragma once

// Reproducible random streams.
//
// Two generators are used throughout the project:
//   * Stream: a sequential std::mt19937_64 engine. The engine's output
//     sequence is fixed by the C++ standard; every conversion to a
//     distribution is done here (never through <random> distributions,
//     whose algorithms are implementation-defined), so results are
//     identical across compilers and platforms.
//   * counter_uniform(): a stateless hash of (seed, key...) through the
//     SplitMix64 finalizer. Used where a draw must depend only on *what*
//     is being drawn (frame, user, broadcast) and not on call order.
//
// Substream seeds are derived with derive_seed(seed, stream_id).

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mvgmp {

/// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::uint64_t stream_id) noexcept {
  return mix64(mix64(seed) ^ mix64(stream_id + 0x632BE59BD9B4E019ULL));
}

/// Maps 64 random bits to a double in [0, 1) with 53 bits of precision.
constexpr double to_unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Stateless uniform draw in [0, 1) keyed by an arbitrary tuple of integers.
inline double counter_uniform(std::uint64_t seed,
                              std::initializer_list<std::uint64_t> key) noexcept {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t k : key) h = mix64(h ^ k);
  return to_unit_interval(h);
}

class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}
  Stream(std::uint64_t seed, std::uint64_t stream_id)
      : engine_(derive_seed(seed, stream_id)) {}

  std::uint64_t bits() { return engine_(); }
  double uniform() { return to_unit_interval(engine_()); }
  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via the Box-Muller transform (one value per call).
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace mvgmp
