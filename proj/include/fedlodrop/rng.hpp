// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fedlodrop {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic seed derivation: every randomized step in the pipeline gets
// its stream from hash(global_seed, part, part, ...). The server uses the same
// derivation to reconstruct per-(round, device) sparsity patterns.
inline uint64_t derive_seed(uint64_t base) { return splitmix64(base); }

template <class... Rest>
uint64_t derive_seed(uint64_t base, uint64_t head, Rest... rest) {
  return derive_seed(splitmix64(base ^ (head + 0x9e3779b97f4a7c15ULL)), rest...);
}

// Thin wrapper around mt19937_64 with portable uniform/normal draws, so frozen
// test values do not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next() { return eng_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) {
    int v = static_cast<int>(uniform() * n);
    return v >= n ? n - 1 : v;
  }

  // Box-Muller with a cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Marsaglia-Tsang; alpha > 0.
  double gamma(double alpha) {
    if (alpha < 1.0) {
      const double u = uniform();
      return gamma(alpha + 1.0) * std::pow(u <= 0.0 ? 1e-300 : u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fedlodrop
