#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace socnav {

/// Seedable random stream with portable sampling.
///
/// The std distributions are implementation-defined, so every draw here is
/// derived directly from the raw 64-bit engine output. Two builds against
/// different standard libraries produce identical streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1); safe to pass to log().
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double exponential() { return -std::log(uniform_open()); }

  double gumbel() { return -std::log(-std::log(uniform_open())); }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives an independent child seed (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace socnav
