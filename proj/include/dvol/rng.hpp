#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "dvol/halton.hpp"
#include "dvol/util.hpp"

namespace dvol {

// Deterministic random source: mt19937_64 for bits, inverse-CDF transform
// for normals. Avoids std::*_distribution, whose output is
// implementation-defined; given the seed, every stream here is reproducible
// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // uniform in (0, 1): 53 high bits, offset by half an ulp so 0 never occurs
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() { return inv_normal_cdf(uniform()); }

  double exponential() { return -std::log(uniform()); }

  // Knuth's product method, chunked via Poisson additivity for large means.
  std::uint64_t poisson(double lambda) {
    if (!(lambda >= 0.0) || lambda > 1e6)
      throw DataError("poisson mean out of range");
    std::uint64_t total = 0;
    while (lambda > 0.0) {
      const double chunk = lambda > 30.0 ? 30.0 : lambda;
      lambda -= chunk;
      const double limit = std::exp(-chunk);
      double p = 1.0;
      std::uint64_t k = 0;
      do {
        ++k;
        p *= uniform();
      } while (p > limit);
      total += k - 1;
    }
    return total;
  }

  // Marsaglia-Tsang squeeze method; shape < 1 boosted via the power trick.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw DataError("gamma shape must be positive");
    if (shape < 1.0)
      return gamma(shape + 1.0) * std::pow(uniform(), 1.0 / shape);
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  std::uint64_t bits() { return engine_(); }

  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer; used to derive independent child seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace dvol
