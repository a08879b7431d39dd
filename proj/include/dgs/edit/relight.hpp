// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dgs/ibl/shade.hpp"

namespace dgs {

struct RenderOutput {
  GBuffer gbuffer;
  Image image;
};

struct RenderQuality {
  PrecomputeOptions precompute;  // full-quality defaults
  ShadeOptions shade;
  RasterizeOptions raster;
};

/// Standard render: refresh the split-sum products if stale, rasterize the
/// G-buffer, shade deferred.
RenderOutput render_scene(const GaussianCloud& cloud, EnvironmentLight& light,
                          const Camera& cam, const RenderQuality& quality = {});

/// Relighting: swap the base environment, re-run the precompute, shade. The
/// geometry pass is untouched, so the returned G-buffer is identical to the
/// standard render's.
RenderOutput relight(const GaussianCloud& cloud, EnvironmentLight& light,
                     const CubeMap& new_env, const Camera& cam,
                     const RenderQuality& quality = {});

}  // namespace dgs
