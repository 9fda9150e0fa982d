#pragma once

#include <cstdint>
#include <random>

namespace hpigcn {

/// Portable deterministic generator. std::mt19937_64's sequence is fixed by
/// the standard; the real-valued mapping below is ours so values do not
/// depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [lo, hi) with 53 random bits.
  double uniform(double lo, double hi) {
    const double unit = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * unit;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hpigcn
