#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace shortcut {

// Deterministic RNG wrapper. Distributions are hand-rolled on top of the
// raw mt19937_64 stream so draws are bit-identical across standard library
// implementations (std::normal_distribution is not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    int v = static_cast<int>(uniform() * n);
    return v >= n ? n - 1 : v;
  }

  // Standard normal via Box-Muller, two uniforms per draw (no caching).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  float normalf() { return static_cast<float>(normal()); }

  // Derives an independent stream for sub-tasks (per-sample, per-eval).
  Rng fork(std::uint64_t stream) {
    return Rng(gen_() ^ (stream * 0x9e3779b97f4a7c15ull));
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace shortcut
