// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/ibl/reference.hpp"

#include "dgs/core/random.hpp"
#include "dgs/ibl/brdf.hpp"

namespace dgs {

namespace {

double cosine_pdf(double n_dot_l) { return std::max(n_dot_l, 0.0) / kPi; }

}  // namespace

Vec3 monte_carlo_reference(const ShadePoint& point, const CubeMap& env, int samples,
                           uint64_t seed) {
  const Vec3 n = point.normal;
  const Vec3 v = point.view;
  if (n.dot(v) <= 0.0) return Vec3::Zero();

  Vec3 tangent, bitangent;
  make_basis(n, tangent, bitangent);
  const auto to_world = [&](const Vec3& local) {
    return Vec3(local.x() * tangent + local.y() * bitangent + local.z() * n);
  };

  Pcg32 rng(seed, 77);
  Vec3 sum = Vec3::Zero();
  for (int s = 0; s < samples; ++s) {
    const Vec2 u(rng.next_double(), rng.next_double());
    Vec3 l;
    if (s % 2 == 0) {
      l = to_world(cosine_sample_hemisphere(u));
    } else {
      const Vec3 h = to_world(ggx_sample_half(u, point.roughness));
      l = 2.0 * v.dot(h) * h - v;
    }
    const double n_dot_l = n.dot(l);
    if (n_dot_l <= 0.0) continue;

    // Mixture pdf over the two strategies (deterministic alternation).
    const Vec3 h = (v + l).normalized();
    const double pdf = 0.5 * cosine_pdf(n_dot_l) +
                       0.5 * ggx_reflect_pdf(n.dot(h), v.dot(h), point.roughness);
    if (pdf <= 1e-12) continue;

    const Vec3 brdf = disney_brdf(n, v, l, point.diffuse_albedo, point.roughness,
                                  point.specular_albedo);
    sum += env.sample(l).cwiseProduct(brdf) * (n_dot_l / pdf);
  }
  return sum / samples;
}

}  // namespace dgs
