#ifndef SEGTTA_RNG_HPP
#define SEGTTA_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>

#include "segtta/hash.hpp"

namespace segtta {

/// Names one independent random stream: which volume, and which consumer
/// (an augmentation or a backend/view pair) draws from it. Keys are content
/// strings rather than list positions so a stream survives reordering or
/// removal of other entries.
struct StreamKey {
  std::string volume_id;
  std::string consumer;
};

/// Deterministic generator for one (seed, stream key). mt19937_64's output
/// sequence is fixed by the standard; the standard distributions are not, so
/// uniform and normal variates are derived here by hand.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, const StreamKey& key)
      : seed_(seed), engine_(hash_combine(hash_combine(mix64(seed), fnv1a(key.volume_id)), fnv1a(key.consumer))) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire-style rejection keeps the draw unbiased.
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller; the second variate is kept for the next call.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace segtta

#endif  // SEGTTA_RNG_HPP
