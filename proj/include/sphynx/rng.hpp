#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace sphynx {

// Deterministic RNG wrapper. mt19937_64's raw output sequence is fixed by the
// standard, and all value mappings below are hand-rolled (std::*_distribution
// is implementation-defined), so streams are reproducible across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), eng_(seed) {}

  uint64_t seed() const { return seed_; }

  uint64_t u64() { return eng_(); }

  // Unbiased integer in [0, n), n >= 1. Rejection sampling on the top range.
  uint64_t below(uint64_t n) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

  // Uniform double on the open interval (0, 1): never 0, never 1, so it is
  // safe to take log(u) and log(-log(u)).
  double open01() {
    return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1p-53;
  }

  // Standard Gumbel(0,1) variate.
  double gumbel() { return -std::log(-std::log(open01())); }

  // Standard normal via Box-Muller (one value per call; cached pair unused to
  // keep the stream position a simple function of call count).
  double normal() {
    double u1 = open01();
    double u2 = open01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * open01(); }

  // Independent child stream. splitmix64 on (seed, label) decorrelates
  // sibling streams even for adjacent labels.
  Rng substream(uint64_t label) const {
    return Rng(splitmix64(splitmix64(seed_ + 0x9e3779b97f4a7c15ULL) ^ label));
  }

  static uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  uint64_t seed_;
  std::mt19937_64 eng_;
};

}  // namespace sphynx
