#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>

namespace big {

/// Counter-based random stream. Output i is a pure function of (seed, i), so
/// two streams with the same seed and call sequence agree bit for bit, and
/// streams derived with split() never overlap in practice.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed = 0) : seed_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(seed_, counter_++); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  /// Independent child stream keyed by `stream_id`.
  RngStream split(std::uint64_t stream_id) const {
    return RngStream(mix(seed_ ^ 0xA0761D6478BD642FULL, stream_id + 0x9E3779B97F4A7C15ULL));
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Lemire's multiply-shift with rejection.
  int uniform_int(int n) {
    const auto range = static_cast<std::uint64_t>(n);
    while (true) {
      const std::uint64_t x = (*this)();
      const unsigned __int128 m = static_cast<unsigned __int128>(x) * range;
      const auto low = static_cast<std::uint64_t>(m);
      if (low >= (0 - range) % range) return static_cast<int>(m >> 64);
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Draws an index from an unnormalized nonnegative weight vector.
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    int last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      last_positive = static_cast<int>(i);
      if (u < weights[i]) return last_positive;
      u -= weights[i];
    }
    return last_positive;
  }

  double normal() {
    // Box-Muller; uses two draws per call.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  static std::uint64_t mix(std::uint64_t key, std::uint64_t counter) {
    std::uint64_t z = key + counter * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    z += key;
    z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDULL;
    z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ULL;
    return z ^ (z >> 33);
  }

  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace big
