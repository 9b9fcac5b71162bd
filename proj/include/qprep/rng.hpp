#pragma once

// Counter-based deterministic RNG.  Each (seed, stream) pair yields an
// independent sequence, so Monte-Carlo shots can be assigned one stream each
// and reproduce bit-identically regardless of evaluation order.

#include <cmath>
#include <cstdint>

namespace qprep {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& s) {
  s += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) {
    // Mix seed and stream into a per-stream state; splitmix64 output is
    // equidistributed enough that consecutive stream ids decorrelate fully.
    std::uint64_t s = seed;
    std::uint64_t a = detail::splitmix64(s);
    s = a ^ (stream * 0xd6e8feb86659fd93ull + 0x2545f4914f6cdd1dull);
    state_ = detail::splitmix64(s) ^ a;
  }

  std::uint64_t next_u64() { return detail::splitmix64(state_); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller (cached second value).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(6.283185307179586476925286766559 * u2);
    have_spare_ = true;
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Sample an index from unnormalized non-negative weights.
  template <class Container>
  int sample(const Container& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    double acc = 0.0;
    int n = static_cast<int>(weights.size());
    for (int i = 0; i < n; ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return n - 1;  // u landed inside accumulated rounding slack
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace qprep
