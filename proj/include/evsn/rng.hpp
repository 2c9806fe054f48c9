#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace evsn {

/// xoshiro256** generator keyed by a (seed, stream) pair.
///
/// The 256-bit state is filled by SplitMix64 starting from
/// key = mix64(seed ^ mix64(stream + 0x9E3779B97F4A7C15)), where mix64 is the
/// SplitMix64 output finalizer. Identical (seed, stream) pairs give identical
/// sequences on every platform; distinct streams are statistically independent.
class SeededRng {
 public:
  using State = std::array<std::uint64_t, 4>;

  SeededRng(std::uint64_t seed, std::uint64_t stream = 0);

  static SeededRng from_state(const State& state);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);
  /// Standard normal via Box-Muller (consumes exactly two draws).
  double normal();
  /// Poisson sample by CDF inversion of a single uniform draw, so a larger rate
  /// never produces a smaller count for the same generator state. rate <= 700.
  std::uint64_t poisson(double rate);
  bool bernoulli(double p);

  const State& state() const noexcept { return state_; }

 private:
  SeededRng() = default;
  State state_{};
};

std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace evsn
