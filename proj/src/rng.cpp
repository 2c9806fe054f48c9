#include "evsn/rng.hpp"

#include <cmath>
#include <numbers>

#include "evsn/error.hpp"

namespace evsn {

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

std::uint64_t splitmix_next(std::uint64_t& x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  return mix64(x);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t key = mix64(seed ^ mix64(stream + 0x9E3779B97F4A7C15ULL));
  for (auto& word : state_) word = splitmix_next(key);
}

SeededRng SeededRng::from_state(const State& state) {
  if (state[0] == 0 && state[1] == 0 && state[2] == 0 && state[3] == 0) {
    fail(ErrorKind::data, "xoshiro256** state must not be all zero");
  }
  SeededRng rng;
  rng.state_ = state;
  return rng;
}

std::uint64_t SeededRng::next_u64() {
  auto& s = state_;
  const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
  const std::uint64_t t = s[1] << 17;
  s[2] ^= s[0];
  s[3] ^= s[1];
  s[1] ^= s[2];
  s[0] ^= s[3];
  s[2] ^= t;
  s[3] = rotl(s[3], 45);
  return result;
}

double SeededRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::size_t SeededRng::index(std::size_t n) {
  if (n == 0) fail(ErrorKind::contract, "SeededRng::index requires n > 0");
  // Lemire's multiply-shift with rejection; unbiased.
  const std::uint64_t range = n;
  __uint128_t m = static_cast<__uint128_t>(next_u64()) * range;
  auto low = static_cast<std::uint64_t>(m);
  if (low < range) {
    const std::uint64_t threshold = (0 - range) % range;
    while (low < threshold) {
      m = static_cast<__uint128_t>(next_u64()) * range;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::size_t>(m >> 64);
}

double SeededRng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t SeededRng::poisson(double rate) {
  if (!(rate >= 0.0) || rate > 700.0) {
    fail(ErrorKind::domain, "poisson rate must lie in [0, 700], got " + std::to_string(rate));
  }
  const double u = uniform();
  if (rate == 0.0) return 0;
  double pmf = std::exp(-rate);
  double cdf = pmf;
  std::uint64_t k = 0;
  while (u >= cdf) {
    ++k;
    pmf *= rate / static_cast<double>(k);
    const double next = cdf + pmf;
    if (next == cdf) break;  // tail exhausted in double precision
    cdf = next;
  }
  return k;
}

bool SeededRng::bernoulli(double p) { return uniform() < p; }

}  // namespace evsn
