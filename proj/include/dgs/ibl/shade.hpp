// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dgs/ibl/environment.hpp"
#include "dgs/raster/gbuffer.hpp"

namespace dgs {

/// Raised when shading is asked to run against stale split-sum products.
class StaleLightError : public Error {
 public:
  StaleLightError() : Error("environment light is dirty; refresh() before shading") {}
};

struct ShadeOptions {
  Vec3 background = Vec3::Zero();
  int threads = 1;
};

/// Pixel-level image-based shading of a G-buffer. For pixels with
/// alpha > 0.5: out = k_d/pi * irradiance(n) + prefiltered(reflect(-w_o, n),
/// mip(r)) * (k_s * lut.scale + lut.bias), with w_o the camera ray through
/// the pixel, plus (1 - alpha) * background. Pixels at or below the
/// threshold only receive the background term. Throws StaleLightError if
/// the light is dirty.
Image deferred_shade(const GBuffer& gbuffer, const Camera& cam, const EnvironmentLight& light,
                     const ShadeOptions& opts = {});

/// Gradients of a scalar loss through deferred_shade. d_normal_unit is taken
/// w.r.t. the unit normal map (chain through normal_renorm_backward to reach
/// the composited blend). Cube-map gradients address the split-sum products;
/// chain them through the precompute adjoints to reach the base texels.
struct ShadeGrads {
  Image d_albedo;       // 3
  Image d_roughness;    // 1
  Image d_specular;     // 3
  Image d_normal_unit;  // 3
  Image d_alpha;        // 1
  CubeMap d_irradiance;
  std::vector<CubeMap> d_prefiltered;
};

ShadeGrads deferred_shade_backward(const Image& d_output, const GBuffer& gbuffer,
                                   const Camera& cam, const EnvironmentLight& light,
                                   const ShadeOptions& opts = {});

/// The forward-shading baseline: every splat is shaded with its own
/// attributes (view ray toward the splat center), and the shaded colors are
/// alpha-composited afterwards. Kept for relighting comparisons against the
/// deferred path.
Image forward_shade(const GaussianCloud& cloud, const std::vector<ProjectedGaussian>& projected,
                    const Camera& cam, const EnvironmentLight& light,
                    const ShadeOptions& opts = {});

}  // namespace dgs
