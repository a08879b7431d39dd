// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "dgs/raster/compositor.hpp"

namespace dgs {

/// Alpha threshold above which a pixel counts as surface: shading runs there
/// and the blended normal is renormalized.
constexpr double kSurfaceAlpha = 0.5;

/// Per-pixel attribute maps produced by one compositing traversal.
/// normal_map is unit length where alpha > 0.5 and zero elsewhere;
/// normal_raw keeps the blend as composited (the differentiable quantity).
struct GBuffer {
  int width = 0, height = 0;
  Image position_map;   // 3
  Image normal_map;     // 3, renormalized / zeroed
  Image normal_raw;     // 3, as composited
  Image albedo_map;     // 3, k_d
  Image roughness_map;  // 1
  Image specular_map;   // 3, k_s
  Image alpha_map;      // 1
  Image depth_map;      // 1

  bool surface_at(int x, int y) const { return alpha_map.at(x, y) > kSurfaceAlpha; }
};

/// One projection + one compositing traversal filling every map; all maps
/// share the same per-splat alphas and transmittances. Empty clouds yield
/// all-zero buffers.
GBuffer render_gbuffer(const GaussianCloud& cloud, const Camera& cam,
                       const RasterizeOptions& opts = {});

/// Same, reusing an existing projection (the trainer projects once per step).
GBuffer render_gbuffer(const std::vector<ProjectedGaussian>& projected,
                       const GaussianCloud& cloud, const Camera& cam,
                       const RasterizeOptions& opts = {});

/// Pixel-space gradients flowing back into the G-buffer. Zero-sized images
/// are treated as zero gradients.
struct GBufferGrads {
  Image d_albedo;      // 3
  Image d_roughness;   // 1
  Image d_specular;    // 3
  Image d_normal_raw;  // 3 (w.r.t. the composited, pre-renormalization blend)
  Image d_alpha;       // 1
};

/// Per-Gaussian gradients for the shading attributes and opacity.
struct GaussianGrads {
  std::vector<Vec3> d_diffuse_albedo;
  std::vector<double> d_roughness;
  std::vector<Vec3> d_specular_albedo;
  std::vector<Vec3> d_normal;
  std::vector<double> d_opacity_logit;

  explicit GaussianGrads(size_t n = 0)
      : d_diffuse_albedo(n, Vec3::Zero()),
        d_roughness(n, 0.0),
        d_specular_albedo(n, Vec3::Zero()),
        d_normal(n, Vec3::Zero()),
        d_opacity_logit(n, 0.0) {}

  void accumulate(const GaussianGrads& other);
};

/// Adjoint of render_gbuffer for the shading attributes: chains per-pixel
/// G-buffer gradients through Eq.-style compositing back to every splat the
/// pixel saw. Geometry gradients (position / covariance) are out of scope;
/// opacity is the one geometry parameter with a gradient.
GaussianGrads composite_backward(const GBufferGrads& grads,
                                 const std::vector<ProjectedGaussian>& projected,
                                 const GaussianCloud& cloud, const Camera& cam,
                                 const RasterizeOptions& opts = {});

/// Renormalization gradient: given dL/d(unit normal map), returns the
/// dL/d(raw composited normal) image (zero where alpha <= 0.5).
Image normal_renorm_backward(const GBuffer& gbuffer, const Image& d_normal_unit);

/// Writes gbuf_{pos,normal,kd,rough,ks,alpha,depth}.pfm into `dir`.
void dump_gbuffer(const GBuffer& gbuffer, const std::string& dir);

}  // namespace dgs
