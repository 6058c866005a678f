#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "dpr/vec.hpp"

namespace dpr {

/// Clamp window keeping -log(-log(u)) finite.
inline constexpr double kUniformEps = 1e-12;

inline double gumbel_from_uniform(double u) {
  u = std::min(std::max(u, kUniformEps), 1.0 - kUniformEps);
  return -std::log(-std::log(u));
}

/// Deterministic random stream. mt19937_64 output is pinned by the standard
/// and all value mappings are spelled out here, so a seed fixes every draw
/// bit for bit across platforms (std::*_distribution is deliberately avoided).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform draw in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    return static_cast<int>(eng_() % static_cast<std::uint64_t>(n));
  }

  double gumbel() { return gumbel_from_uniform(uniform01()); }

  /// Standard normal via Box-Muller (no cached spare: two uniforms per draw).
  double gaussian() {
    double u1 = std::max(uniform01(), kUniformEps);
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  std::mt19937_64 eng_;
};

/// count i.i.d. standard Gumbel draws; count == 0 yields an empty vector.
inline Vec gumbel_noise(Rng& rng, std::size_t count) {
  Vec g(count);
  for (double& x : g) x = rng.gumbel();
  return g;
}

/// splitmix64 step, used to derive independent child seeds from one master.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace dpr
