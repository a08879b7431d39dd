// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dgs/ibl/cubemap.hpp"

namespace dgs {

/// One shading query: a surface point's material and frame.
struct ShadePoint {
  Vec3 normal;   // unit
  Vec3 view;     // unit, pointing away from the surface
  Vec3 diffuse_albedo;
  double roughness = 0.5;
  Vec3 specular_albedo;  // Fresnel base reflectance
};

/// Unbiased Monte Carlo estimate of the rendering equation against `env`
/// with the microfacet BRDF: alternating cosine / GGX samples combined as a
/// mixture (variance falls as 1/samples). The correctness oracle for the
/// split-sum pipeline.
Vec3 monte_carlo_reference(const ShadePoint& point, const CubeMap& env, int samples,
                           uint64_t seed = 0);

}  // namespace dgs
