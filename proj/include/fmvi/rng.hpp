#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>

namespace fmvi {

// Deterministic sampling helpers. The exact stream layout is part of the
// reproducibility contract (fixed seed => bitwise identical draws), so every
// primitive consumes a documented number of generator outputs:
//
//   uniform():        one mt19937_64 output, mapped to [0,1) as (x >> 11) * 2^-53
//   normal():         exactly two uniforms (u1, u2), Box-Muller without caching:
//                     sqrt(-2 ln(1 - u1)) * cos(2 pi u2)
//   categorical(p):   one uniform, CDF walk over p in index order
//   uniform_int(a,b): one uniform, a + floor(u * (b - a + 1))
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(two_pi * u2);
  }

  // p must be non-negative and sum to ~1; the trailing index absorbs any
  // floating-point shortfall of the CDF.
  int categorical(std::span<const double> p) {
    if (p.empty()) throw std::invalid_argument("categorical: empty probability vector");
    const double u = uniform();
    double cdf = 0.0;
    for (std::size_t k = 0; k + 1 < p.size(); ++k) {
      cdf += p[k];
      if (u < cdf) return static_cast<int>(k);
    }
    return static_cast<int>(p.size() - 1);
  }

  int uniform_int(int lo, int hi) {
    if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
    return lo + static_cast<int>(uniform() * static_cast<double>(hi - lo + 1));
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace fmvi
