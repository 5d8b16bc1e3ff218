#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace hei {

/// Deterministic RNG used throughout the library. All stochastic steps draw
/// from an explicitly seeded stream so identical configs replay bit-identically.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  // Uniform integer in [0, n).
  std::int64_t uniform_int(std::int64_t n) {
    return std::uniform_int_distribution<std::int64_t>(0, n - 1)(engine_);
  }

  bool bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform() < p;
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  double gamma(double shape) {
    return std::gamma_distribution<double>(shape, 1.0)(engine_);
  }

  // Beta variate via the two-gamma construction. Extreme parameters collapse
  // to the corresponding point mass so configs can force homophily 0 or 1.
  double beta(double alpha, double bta) {
    constexpr double kTiny = 1e-9;
    constexpr double kHuge = 1e9;
    if (bta < kTiny || alpha > kHuge) return 1.0;
    if (alpha < kTiny || bta > kHuge) return 0.0;
    double x = gamma(alpha);
    double y = gamma(bta);
    double s = x + y;
    if (s <= 0.0) return 0.5;
    return x / s;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), engine_);
  }

  /// Independent substream of this seed; `salt` separates distinct uses.
  Rng derive(std::uint64_t salt) const {
    return Rng(seed_ ^ (salt * 0x9E3779B97F4A7C15ULL + 0x2545F4914F6CDD1DULL));
  }

  std::uint64_t seed() const { return seed_; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace hei
