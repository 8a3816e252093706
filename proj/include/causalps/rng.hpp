#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace causalps {

// splitmix64 finalizer; used to decorrelate derived stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic random stream. All distributions are generated from the
// mt19937_64 engine output directly (no std:: distribution objects), so a
// given seed yields the same draw sequence on every platform and build.
//
// Child streams derive from the construction seed, never from the draw
// position, so `derive(k)` is stable no matter how many draws were taken.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

  // Independent child stream for worker/chain/replication `stream`.
  Rng derive(std::uint64_t stream) const {
    return Rng(mix64(seed_ ^ mix64(stream + 0x6a09e667f3bcc909ULL)));
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0,1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), rejection-free bias below 2^-64 ignored for
  // the small n used here; n must be >= 1.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be >= 1");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Marsaglia polar method (second value cached).
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    cached_ = v * f;
    has_cached_ = true;
    return u * f;
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  double exponential() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return -std::log(u);
  }

  // Gamma(shape, 1) via Marsaglia-Tsang; boost trick for shape < 1.
  double gamma(double shape) {
    if (shape <= 0.0) throw std::invalid_argument("gamma: shape must be > 0");
    if (shape < 1.0) {
      const double g = gamma(shape + 1.0);
      double u;
      do {
        u = uniform();
      } while (u <= 0.0);
      return g * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v;
    }
  }

  double beta(double a, double b) {
    if (a <= 0.0 || b <= 0.0)
      throw std::invalid_argument("beta: parameters must be > 0");
    const double ga = gamma(a);
    const double gb = gamma(b);
    return ga / (ga + gb);
  }

  // N(mean, sd) truncated to (lower, inf). Rejection from the normal when the
  // cut keeps enough mass, otherwise Robert's translated-exponential proposal.
  double truncated_normal_above(double mean, double sd, double lower) {
    const double cut = (lower - mean) / sd;
    double z;
    if (cut <= 0.45) {
      do {
        z = normal();
      } while (z <= cut);
    } else {
      const double lambda = 0.5 * (cut + std::sqrt(cut * cut + 4.0));
      for (;;) {
        z = cut + exponential() / lambda;
        const double rho = std::exp(-0.5 * (z - lambda) * (z - lambda));
        if (uniform() <= rho) break;
      }
    }
    return mean + sd * z;
  }

  // N(mean, sd) truncated to (-inf, upper).
  double truncated_normal_below(double mean, double sd, double upper) {
    return -truncated_normal_above(-mean, sd, -upper);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace causalps
