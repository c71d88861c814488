#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include "ope/errors.hpp"

namespace ope {

/// Fixed tags for deriving independent RNG streams from one run seed.
/// Every sampler in the project keys its stream as (tag, indices...), so
/// results never depend on evaluation order or thread count.
namespace stream {
inline constexpr std::uint64_t kTrajectory = 1;
inline constexpr std::uint64_t kRollout = 2;
inline constexpr std::uint64_t kCvPartition = 3;
inline constexpr std::uint64_t kFqeStep = 4;
inline constexpr std::uint64_t kRun = 5;
inline constexpr std::uint64_t kOracle = 6;
inline constexpr std::uint64_t kBatch = 7;
inline constexpr std::uint64_t kFqe = 8;
inline constexpr std::uint64_t kInstance = 9;
}  // namespace stream

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Mixes a base seed with a stream key into a 64-bit sub-stream seed.
inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> key) {
  std::uint64_t s = detail::splitmix64(seed);
  for (std::uint64_t w : key) s = detail::splitmix64(s ^ w);
  return s;
}

/// Deterministic random stream. Wraps std::mt19937_64 but generates uniform
/// and normal variates itself so sequences are identical across standard
/// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> key) {
    return Rng(derive_seed(seed, key));
  }

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw InvalidInput("Rng::below: n must be positive");
    const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ope
