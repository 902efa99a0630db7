#pragma once

#include <cmath>
#include <cstdint>

namespace influence {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based stream keyed by (seed, counter). A fresh stream is cheap to
/// construct per Monte Carlo draw, so draw k always sees the same variates no
/// matter which thread or process evaluates it.
class DrawRng {
 public:
  DrawRng(std::uint64_t seed, std::uint64_t counter) {
    std::uint64_t s = seed;
    std::uint64_t a = splitmix64(s);
    s = a ^ (counter * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
    state_ = splitmix64(s);
    if (state_ == 0) state_ = 0x9e3779b97f4a7c15ULL;
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform on (0, 1].
  double next_unit() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; consumes two uniforms per call.
  double next_normal() {
    double u1 = next_unit();
    double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  /// Uniform integer in [lo, hi].
  long next_int(long lo, long hi) {
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<long>(next_u64() % span);
  }

  /// Exponential with the given rate.
  double next_exponential(double rate) { return -std::log(next_unit()) / rate; }

 private:
  std::uint64_t state_;
};

}  // namespace influence
