// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "dgs/core/types.hpp"

namespace dgs {

/// One splat: ellipsoidal geometry plus decoupled shading attributes.
/// Scale is stored as log, opacity as a logit, so optimizer updates stay
/// unconstrained; normal is a free 3-vector renormalized after each step.
struct Gaussian {
  Vec3 position = Vec3::Zero();
  Quat rotation = Quat::Identity();  // unit
  Vec3 log_scale = Vec3::Zero();     // per-axis stddev, log of world units
  double opacity_logit = 0.0;
  Vec3 normal = Vec3::UnitZ();       // unit
  Vec3 diffuse_albedo = Vec3::Constant(0.5);   // k_d, each in [0,1]
  double roughness = 0.5;                      // in [kMinRoughness, 1]
  Vec3 specular_albedo = Vec3::Constant(0.04); // k_s, each in [0,1]

  double opacity() const { return sigmoid(opacity_logit); }
  Vec3 scale() const { return log_scale.array().exp(); }

  /// Re-establishes invariants after an unconstrained parameter update.
  /// Unit vectors already within tolerance are left bit-unchanged.
  void renormalize() {
    const double qlen = rotation.norm();
    if (std::abs(qlen - 1.0) > 1e-12) rotation.coeffs() /= qlen;
    const double len = normal.norm();
    if (len <= 1e-12)
      normal = Vec3::UnitZ();
    else if (std::abs(len - 1.0) > 1e-12)
      normal /= len;
    for (int c = 0; c < 3; ++c) {
      diffuse_albedo[c] = clamp01(diffuse_albedo[c]);
      specular_albedo[c] = clamp01(specular_albedo[c]);
    }
    roughness = clamped(roughness, kMinRoughness, 1.0);
  }
};

struct GaussianCloud {
  std::vector<Gaussian> gaussians;

  size_t count() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }
  Gaussian& operator[](size_t i) { return gaussians[i]; }
  const Gaussian& operator[](size_t i) const { return gaussians[i]; }
};

/// World-space covariance R diag(s)^2 R^T; symmetric positive semi-definite.
Mat3 covariance_of(const Gaussian& g);

}  // namespace dgs
