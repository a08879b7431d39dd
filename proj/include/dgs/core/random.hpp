// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "dgs/core/types.hpp"

namespace dgs {

/// PCG32: small, fast, reproducible across platforms. Used everywhere a
/// seedable stream is needed so runs are bit-repeatable for a given seed.
class Pcg32 {
 public:
  explicit Pcg32(uint64_t seed = 0x853c49e6748fea9bULL, uint64_t stream = 1) {
    state_ = 0;
    inc_ = (stream << 1) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
  }

  uint32_t next_u32() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((~rot + 1u) & 31));
  }

  /// Uniform in [0, 1).
  double next_double() { return next_u32() * (1.0 / 4294967296.0); }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Uniform integer in [0, n).
  uint32_t next_below(uint32_t n) { return next_u32() % n; }

 private:
  uint64_t state_;
  uint64_t inc_;
};

/// Van der Corput radical inverse, base 2.
inline double radical_inverse_base2(uint32_t bits) {
  bits = (bits << 16u) | (bits >> 16u);
  bits = ((bits & 0x55555555u) << 1u) | ((bits & 0xAAAAAAAAu) >> 1u);
  bits = ((bits & 0x33333333u) << 2u) | ((bits & 0xCCCCCCCCu) >> 2u);
  bits = ((bits & 0x0F0F0F0Fu) << 4u) | ((bits & 0xF0F0F0F0u) >> 4u);
  bits = ((bits & 0x00FF00FFu) << 8u) | ((bits & 0xFF00FF00u) >> 8u);
  return bits * 2.3283064365386963e-10;  // / 2^32
}

/// Hammersley point i of n in [0,1)^2.
inline Vec2 hammersley(uint32_t i, uint32_t n) {
  return Vec2((i + 0.5) / n, radical_inverse_base2(i));
}

/// 64-bit mix for deriving per-texel sample scrambles from a seed.
inline uint64_t hash_mix(uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

/// Cranley-Patterson rotation of a [0,1)^2 point.
inline Vec2 rotate_sample(const Vec2& u, const Vec2& rot) {
  double a = u.x() + rot.x();
  double b = u.y() + rot.y();
  if (a >= 1.0) a -= 1.0;
  if (b >= 1.0) b -= 1.0;
  return Vec2(a, b);
}

/// Orthonormal basis with z = n (Duff et al. branchless variant).
inline void make_basis(const Vec3& n, Vec3& t, Vec3& b) {
  const double sign = n.z() >= 0.0 ? 1.0 : -1.0;
  const double a = -1.0 / (sign + n.z());
  const double c = n.x() * n.y() * a;
  t = Vec3(1.0 + sign * n.x() * n.x() * a, sign * c, -sign * n.x());
  b = Vec3(c, sign + n.y() * n.y() * a, -n.y());
}

/// Cosine-weighted hemisphere direction around +z from a [0,1)^2 point.
inline Vec3 cosine_sample_hemisphere(const Vec2& u) {
  const double r = std::sqrt(u.x());
  const double phi = 2.0 * kPi * u.y();
  const double z = std::sqrt(std::max(0.0, 1.0 - u.x()));
  return Vec3(r * std::cos(phi), r * std::sin(phi), z);
}

}  // namespace dgs
