#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>

#include "npwnet/errors.hpp"

namespace npwnet {

//! SplitMix64 mixing step; used to derive decorrelated stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

//! Seedable, portable random generator.
//!
//! The engine is std::mt19937_64, whose output sequence is fixed by the
//! standard, and all variate transforms below are explicit formulas
//! (uniform via a 53-bit shift, normal via Box-Muller, gamma via
//! Marsaglia-Tsang), so every draw is reproducible bit-exactly from the
//! seed on any conforming platform.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed), seed_mix_(seed) {}

  //! Derives an independent generator for a named sub-stream.
  Rng stream(std::uint64_t id) const {
    return Rng(splitmix64(seed_mix_ ^ (0x9e3779b97f4a7c15ULL * (id + 1))));
  }

  //! Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  //! Uniform integer in [0, n).
  std::uint64_t uniform_below(std::uint64_t n) {
    // rejection to avoid modulo bias
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

  //! Standard normal via Box-Muller (two uniforms per draw).
  double normal() {
    const double u1 = 1.0 - uniform01(); // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi_ * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  //! Gamma(shape, rate) via Marsaglia-Tsang squeeze.
  double gamma(double shape, double rate) {
    if (shape <= 0.0 || rate <= 0.0)
      throw Error("gamma: shape and rate must be positive");
    if (shape < 1.0) {
      const double u = uniform01();
      return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x)
        return d * v / rate;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v / rate;
    }
  }

  //! Single draw from a categorical distribution with the given simplex.
  int categorical(const Eigen::VectorXd& probs) {
    const double u = uniform01();
    double cum = 0.0;
    for (int k = 0; k < probs.size(); ++k) {
      cum += probs[k];
      if (u < cum)
        return k;
    }
    return static_cast<int>(probs.size()) - 1;
  }

  //! Dirichlet draw with concentration vector alpha.
  Eigen::VectorXd dirichlet(const Eigen::VectorXd& alpha) {
    Eigen::VectorXd g(alpha.size());
    for (int k = 0; k < alpha.size(); ++k)
      g[k] = gamma(alpha[k], 1.0);
    const double s = g.sum();
    if (s <= 0.0)
      return Eigen::VectorXd::Constant(alpha.size(), 1.0 / alpha.size());
    return g / s;
  }

private:
  std::mt19937_64 eng_;
  std::uint64_t seed_mix_{0};
  static constexpr double two_pi_ = 6.283185307179586476925286766559;
};

} // namespace npwnet
