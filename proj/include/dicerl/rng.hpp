#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace dicerl {

// Deterministic random source. Uniform draws come from SplitMix64 (a 64-bit
// counter-based generator), gaussians from Box-Muller on top of it. The
// stream is a pure function of the seed, so identical seeds reproduce
// identical draws on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Multiply-high mapping; bias is O(n / 2^64).
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal. Box-Muller produces draws in pairs; the spare is cached
  // in the generator state so consecutive calls of any size read one
  // contiguous stream.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] so the log is always finite.
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double angle = kTwoPi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

  // Derive an independent stream for a named role. Keeps module streams
  // decoupled: consuming draws in one role never shifts another.
  Rng fork(std::uint64_t role) const {
    Rng child(state_ ^ (0xD1B54A32D192ED03ull * (role + 1)));
    child.next_u64();
    return child;
  }

 private:
  static constexpr double kTwoPi = 6.283185307179586476925286766559;
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline std::vector<double> gaussian_sample(Rng& rng, std::size_t n) {
  std::vector<double> out(n);
  for (double& v : out) v = rng.gaussian();
  return out;
}

}  // namespace dicerl
