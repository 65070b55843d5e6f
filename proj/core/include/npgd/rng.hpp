#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace npgd {

// xorshift64* generator. Fixed here so that masks, initial weights and data
// orders are reproducible across platforms and reimplementations:
//
//   seeding : state = splitmix64(seed); a zero state is replaced by
//             0x9E3779B97F4A7C15
//   step    : x ^= x >> 12; x ^= x << 25; x ^= x >> 27;
//   output  : x * 0x2545F4914F6CDD1D (mod 2^64)
//   uniform : (output >> 11) * 2^-53, in [0, 1)
//   normal  : Box-Muller on two uniforms, u1 mapped to (0, 1]
class Xorshift64Star {
 public:
  explicit Xorshift64Star(std::uint64_t seed) : state_(splitmix64(seed)) {
    if (state_ == 0) state_ = 0x9E3779B97F4A7C15ULL;
  }

  std::uint64_t next() {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1DULL;
  }

  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return std::uint64_t(uniform() * double(n)) % n; }

  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t state_;
};

}  // namespace npgd
