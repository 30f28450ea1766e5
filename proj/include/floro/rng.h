#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>

namespace floro::rng {

// Deterministic draws on top of mt19937_64. The mappings below are spelled
// out (instead of std::uniform_real_distribution etc.) because seeded runs
// are contractually bit-reproducible.

inline double uniform01(std::mt19937_64 &gen) {
  // 53-bit mantissa in [0, 1)
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64 &gen, double lo, double hi) {
  return lo + (hi - lo) * uniform01(gen);
}

inline double normal(std::mt19937_64 &gen) {
  // Box-Muller, one value per pair of draws
  double u1 = uniform01(gen);
  while (u1 <= 0.0)
    u1 = uniform01(gen);
  const double u2 = uniform01(gen);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Uniform random rotation from a normalized quaternion.
inline Eigen::Matrix3d random_rotation(std::mt19937_64 &gen) {
  Eigen::Vector4d q;
  for (int i = 0; i < 4; ++i)
    q[i] = normal(gen);
  q.normalize();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

} // namespace floro::rng
