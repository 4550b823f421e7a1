#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "icos/core.hpp"

// Deterministic randomness. The engine is std::mt19937_64 (its seeding and
// output sequence are fully specified by the standard), and every sampling
// primitive below is written directly against raw 64-bit draws instead of
// std::*_distribution, whose algorithms are implementation-defined. Two runs
// with the same seed therefore produce identical results on any conforming
// platform.

namespace icos {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Pure function of (master, a, b); used to give every benchmark cell and
// every solver its own independent stream.
inline uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b) {
  return splitmix64(splitmix64(splitmix64(master) ^ a) ^ b);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53 random bits.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1]; safe for log().
  double uniform01_open_zero() {
    return (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01_open_zero();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Unbiased integer in [0, n) by rejection from the top of the 64-bit range.
  int uniform_index(int n) {
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t r;
    do {
      r = gen_();
    } while (r >= limit);
    return static_cast<int>(r % un);
  }

  std::array<int, 2> distinct_pair(int n) {
    const int i = uniform_index(n);
    int j;
    do {
      j = uniform_index(n);
    } while (j == i);
    return {i, j};
  }

  std::array<int, 3> distinct_triple(int n) {
    const int i = uniform_index(n);
    int j;
    do {
      j = uniform_index(n);
    } while (j == i);
    int k;
    do {
      k = uniform_index(n);
    } while (k == i || k == j);
    return {i, j, k};
  }

  // Uniform over [0, n) minus the excluded indices (assumed few).
  int index_excluding(int n, std::span<const int> excluded) {
    while (true) {
      const int k = uniform_index(n);
      bool hit = false;
      for (int e : excluded) {
        if (e == k) {
          hit = true;
          break;
        }
      }
      if (!hit) return k;
    }
  }

  Eigen::Vector3d gaussian_vector() {
    return {gaussian(), gaussian(), gaussian()};
  }

  Eigen::Vector3d unit_vector() {
    while (true) {
      const Eigen::Vector3d v = gaussian_vector();
      const double n = v.norm();
      if (n > 1e-12) return v / n;
    }
  }

  // Uniform inside a ball of the given radius.
  Eigen::Vector3d in_ball(double radius) {
    return unit_vector() * (radius * std::cbrt(uniform01()));
  }

  // Uniform inside the axis-aligned cube [-half, half]^3.
  Eigen::Vector3d in_cube(double half) {
    return {uniform(-half, half), uniform(-half, half), uniform(-half, half)};
  }

  // Uniform rotation from a uniformly distributed unit quaternion.
  Eigen::Matrix3d rotation() {
    while (true) {
      const double w = gaussian(), x = gaussian(), y = gaussian(),
                   z = gaussian();
      const double n = std::sqrt(w * w + x * x + y * y + z * z);
      if (n > 1e-12)
        return Eigen::Quaterniond(w / n, x / n, y / n, z / n)
            .toRotationMatrix();
    }
  }

  // First k entries of a random permutation of [0, n) (partial Fisher-Yates).
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < k; ++i) {
      const int j = i + uniform_index(n - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace icos
