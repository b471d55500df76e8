#pragma once

#include <cstdint>

namespace lcirt {

// SplitMix64 (Steele, Lea & Flood 2014). Chosen for portability: the same
// seed yields the same stream on every platform, which keeps simulated
// datasets and random starts reproducible across builds.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // uniform on [0,1) with 53 random bits
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal();

 private:
  std::uint64_t state_;
};

// Sub-stream rule: stream `index` of master seed s starts from the state
// s + (index+1) * golden-gamma, then evolves as plain SplitMix64. One
// sub-stream per respondent / per random start.
inline SplitMix64 substream(std::uint64_t seed, std::uint64_t index) {
  return SplitMix64(seed + (index + 1) * 0x9E3779B97F4A7C15ULL);
}

// Inverse standard-normal CDF, Wichura's AS 241 (PPND16), |error| < 1e-15.
double normal_quantile(double p);

}  // namespace lcirt
