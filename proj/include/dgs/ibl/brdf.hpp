// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dgs/core/types.hpp"

namespace dgs {

/// GGX/Trowbridge-Reitz normal distribution; alpha = roughness^2.
/// ggx_d(1, r) = 1 / (pi * alpha^2).
inline double ggx_d(double n_dot_h, double roughness) {
  const double alpha = roughness * roughness;
  const double a2 = alpha * alpha;
  const double c = clamped(n_dot_h, 0.0, 1.0);
  const double d = c * c * (a2 - 1.0) + 1.0;
  return a2 / (kPi * d * d);
}

/// Schlick Fresnel with base reflectance f0.
inline Vec3 fresnel_schlick(double cos_theta, const Vec3& f0) {
  const double c = clamped(cos_theta, 0.0, 1.0);
  const double f = std::pow(1.0 - c, 5.0);
  return f0 + (Vec3::Ones() - f0) * f;
}

/// Smith geometry term with the Schlick-GGX form, k = alpha / 2 (the
/// image-based-lighting parameterization; alpha = roughness^2).
inline double smith_g(double n_dot_v, double n_dot_l, double roughness) {
  const double alpha = roughness * roughness;
  const double k = alpha * 0.5;
  const double nv = clamped(n_dot_v, 1e-6, 1.0);
  const double nl = clamped(n_dot_l, 1e-6, 1.0);
  const double g_v = nv / (nv * (1.0 - k) + k);
  const double g_l = nl / (nl * (1.0 - k) + k);
  return g_v * g_l;
}

/// Half vector h importance-sampled from D(h) * (n.h) around +z.
/// u is a point in [0,1)^2.
inline Vec3 ggx_sample_half(const Vec2& u, double roughness) {
  const double alpha = roughness * roughness;
  const double phi = 2.0 * kPi * u.x();
  const double cos_theta = std::sqrt((1.0 - u.y()) / (1.0 + (alpha * alpha - 1.0) * u.y()));
  const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
  return Vec3(sin_theta * std::cos(phi), sin_theta * std::sin(phi), cos_theta);
}

/// pdf of ggx_sample_half mapped to the reflected direction l, given view v
/// and normal-frame quantities: pdf_l = D(h) (n.h) / (4 (v.h)).
inline double ggx_reflect_pdf(double n_dot_h, double v_dot_h, double roughness) {
  if (v_dot_h <= 1e-9) return 0.0;
  return ggx_d(n_dot_h, roughness) * clamped(n_dot_h, 0.0, 1.0) / (4.0 * v_dot_h);
}

/// Full microfacet-plus-Lambert BRDF value: k_d/pi + D F G / (4 (n.l)(n.v)),
/// with k_s as the Fresnel base reflectance f0. Directions in world space,
/// n unit, v and l pointing away from the surface.
inline Vec3 disney_brdf(const Vec3& n, const Vec3& v, const Vec3& l, const Vec3& k_d,
                        double roughness, const Vec3& k_s) {
  const double n_dot_l = n.dot(l);
  const double n_dot_v = n.dot(v);
  if (n_dot_l <= 0.0 || n_dot_v <= 0.0) return Vec3::Zero();
  const Vec3 h = (v + l).normalized();
  const double d = ggx_d(n.dot(h), roughness);
  const Vec3 f = fresnel_schlick(v.dot(h), k_s);
  const double g = smith_g(n_dot_v, n_dot_l, roughness);
  return k_d / kPi + f * (d * g / (4.0 * n_dot_l * n_dot_v));
}

}  // namespace dgs
