// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/edit/relight.hpp"

namespace dgs {

RenderOutput render_scene(const GaussianCloud& cloud, EnvironmentLight& light,
                          const Camera& cam, const RenderQuality& quality) {
  if (light.dirty || !light.precomputed.ready()) light.refresh(quality.precompute);
  RenderOutput out;
  out.gbuffer = render_gbuffer(cloud, cam, quality.raster);
  out.image = deferred_shade(out.gbuffer, cam, light, quality.shade);
  return out;
}

RenderOutput relight(const GaussianCloud& cloud, EnvironmentLight& light,
                     const CubeMap& new_env, const Camera& cam,
                     const RenderQuality& quality) {
  light.base = new_env;
  light.mark_dirty();
  light.refresh(quality.precompute);
  return render_scene(cloud, light, cam, quality);
}

}  // namespace dgs
