// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/ibl/shade.hpp"

#include "dgs/core/parallel.hpp"

namespace dgs {

namespace {

constexpr double kMinNoV = 1e-4;

struct PixelFrame {
  Vec3 view;      // w_o: unit, surface -> camera (negated pixel ray)
  Vec3 normal;    // unit
  Vec3 k_d, k_s;
  double roughness;
  double n_dot_v;
};

PixelFrame pixel_frame(const GBuffer& gb, const Camera& cam, int x, int y) {
  PixelFrame f;
  f.view = -cam.ray_direction(x + 0.5, y + 0.5);
  f.normal = gb.normal_map.rgb(x, y);
  f.k_d = gb.albedo_map.rgb(x, y);
  f.k_s = gb.specular_map.rgb(x, y);
  f.roughness = clamp01(gb.roughness_map.at(x, y));
  f.n_dot_v = f.normal.dot(f.view);
  return f;
}

}  // namespace

Image deferred_shade(const GBuffer& gbuffer, const Camera& cam, const EnvironmentLight& light,
                     const ShadeOptions& opts) {
  if (light.dirty || !light.precomputed.ready()) throw StaleLightError();
  const PrecomputedLight& pre = light.precomputed;
  Image out(gbuffer.width, gbuffer.height, 3);

  parallel_for(gbuffer.height, opts.threads, [&](int64_t y0, int64_t y1, int) {
    for (int y = static_cast<int>(y0); y < y1; ++y) {
      for (int x = 0; x < gbuffer.width; ++x) {
        const double alpha = gbuffer.alpha_map.at(x, y);
        Vec3 color = (1.0 - alpha) * opts.background;
        if (alpha > kSurfaceAlpha) {
          const PixelFrame f = pixel_frame(gbuffer, cam, x, y);
          const Vec3 diffuse =
              f.k_d.cwiseProduct(pre.irradiance.sample(f.normal)) / kPi;
          const Vec3 refl = 2.0 * f.n_dot_v * f.normal - f.view;
          const Vec2 lut =
              pre.brdf_lut.sample(clamped(f.n_dot_v, kMinNoV, 1.0), f.roughness);
          const Vec3 specular = pre.sample_prefiltered(refl, f.roughness)
                                    .cwiseProduct(f.k_s * lut.x() + Vec3::Constant(lut.y()));
          color += diffuse + specular;
        }
        out.set_rgb(x, y, color);
      }
    }
  });
  return out;
}

Image forward_shade(const GaussianCloud& cloud, const std::vector<ProjectedGaussian>& projected,
                    const Camera& cam, const EnvironmentLight& light,
                    const ShadeOptions& opts) {
  if (light.dirty || !light.precomputed.ready()) throw StaleLightError();
  const PrecomputedLight& pre = light.precomputed;
  const Vec3 cam_center = cam.camera_center();

  // Per-splat shading, then the usual compositing of shaded colors.
  const auto shaded = composite(
      projected, cloud, 3,
      [&](const Gaussian& g, const ProjectedGaussian&, double* out) {
        const Vec3 view = (cam_center - g.position).normalized();
        const Vec3 n = g.normal;
        const Vec3 diffuse = g.diffuse_albedo.cwiseProduct(pre.irradiance.sample(n)) / kPi;
        const double n_dot_v = n.dot(view);
        const Vec3 refl = 2.0 * n_dot_v * n - view;
        const Vec2 lut = pre.brdf_lut.sample(clamped(n_dot_v, 1e-4, 1.0),
                                             clamped(g.roughness, 0.0, 1.0));
        const Vec3 specular =
            pre.sample_prefiltered(refl, g.roughness)
                .cwiseProduct(g.specular_albedo * lut.x() + Vec3::Constant(lut.y()));
        const Vec3 color = diffuse + specular;
        out[0] = color.x();
        out[1] = color.y();
        out[2] = color.z();
      },
      cam, RasterizeOptions{16, opts.threads});

  Image out(cam.width, cam.height, 3);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const double alpha = shaded.alpha.at(x, y);
      out.set_rgb(x, y, shaded.attribute.rgb(x, y) + (1.0 - alpha) * opts.background);
    }
  return out;
}

ShadeGrads deferred_shade_backward(const Image& d_output, const GBuffer& gbuffer,
                                   const Camera& cam, const EnvironmentLight& light,
                                   const ShadeOptions& opts) {
  if (light.dirty || !light.precomputed.ready()) throw StaleLightError();
  const PrecomputedLight& pre = light.precomputed;
  const int w = gbuffer.width, h = gbuffer.height;

  ShadeGrads grads;
  grads.d_albedo = Image(w, h, 3);
  grads.d_roughness = Image(w, h, 1);
  grads.d_specular = Image(w, h, 3);
  grads.d_normal_unit = Image(w, h, 3);
  grads.d_alpha = Image(w, h, 1);
  grads.d_irradiance = CubeMap(pre.irradiance.face_res());
  grads.d_prefiltered.reserve(pre.prefiltered.size());
  for (const CubeMap& mip : pre.prefiltered) grads.d_prefiltered.emplace_back(mip.face_res());

  // Single-threaded: cube-map gradient splats share texels across pixels.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec3 d_out = d_output.rgb(x, y);
      if (d_out.isZero(0.0)) continue;
      const double alpha = gbuffer.alpha_map.at(x, y);
      grads.d_alpha.at(x, y) = -d_out.dot(opts.background);
      if (alpha <= kSurfaceAlpha) continue;

      const PixelFrame f = pixel_frame(gbuffer, cam, x, y);
      Vec3 d_normal = Vec3::Zero();

      // Diffuse: k_d/pi * E(n).
      Mat3 irr_jac;
      const Vec3 irradiance = pre.irradiance.sample_with_jacobian(f.normal, irr_jac);
      grads.d_albedo.set_rgb(x, y, d_out.cwiseProduct(irradiance) / kPi);
      const Vec3 d_irr_value = d_out.cwiseProduct(f.k_d) / kPi;
      grads.d_irradiance.splat_gradient(f.normal, d_irr_value);
      d_normal += irr_jac.transpose() * d_irr_value;

      // Specular: P(refl, r) * (k_s * A + B).
      const double nv_clamped = clamped(f.n_dot_v, kMinNoV, 1.0);
      Vec2 d_lut_dnv, d_lut_dr;
      const Vec2 lut =
          pre.brdf_lut.sample_with_gradient(nv_clamped, f.roughness, d_lut_dnv, d_lut_dr);
      const Vec3 refl = 2.0 * f.n_dot_v * f.normal - f.view;
      Mat3 pre_jac;
      Vec3 pre_drough;
      const Vec3 prefiltered =
          pre.sample_prefiltered_with_gradient(refl, f.roughness, pre_jac, pre_drough);
      const Vec3 fresnel_mix = f.k_s * lut.x() + Vec3::Constant(lut.y());

      grads.d_specular.set_rgb(x, y, d_out.cwiseProduct(prefiltered) * lut.x());

      const Vec3 d_prefiltered_value = d_out.cwiseProduct(fresnel_mix);
      pre.splat_prefiltered_gradient(refl, f.roughness, d_prefiltered_value,
                                     grads.d_prefiltered);

      const double d_scale = d_out.cwiseProduct(prefiltered).dot(f.k_s);
      const double d_bias = d_out.cwiseProduct(prefiltered).sum();

      double d_roughness = d_scale * d_lut_dr.x() + d_bias * d_lut_dr.y();
      d_roughness += d_prefiltered_value.dot(pre_drough);
      // roughness map was clamped to [0,1] before use
      const double r_raw = gbuffer.roughness_map.at(x, y);
      grads.d_roughness.at(x, y) = (r_raw > 0.0 && r_raw < 1.0) ? d_roughness : 0.0;

      double d_nv = d_scale * d_lut_dnv.x() + d_bias * d_lut_dnv.y();
      if (f.n_dot_v <= kMinNoV || f.n_dot_v >= 1.0) d_nv = 0.0;

      // refl = 2 (n.v) n - v: d(refl)/dn = 2 (n.v) I + 2 v n^T (as d_n_j terms).
      const Vec3 d_refl = pre_jac.transpose() * d_prefiltered_value;
      d_normal += 2.0 * f.n_dot_v * d_refl + 2.0 * f.view * f.normal.dot(d_refl);
      d_normal += d_nv * f.view;

      grads.d_normal_unit.set_rgb(x, y, d_normal);
    }
  }
  return grads;
}

}  // namespace dgs
