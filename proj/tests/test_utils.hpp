// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "dgs/core/random.hpp"
#include "dgs/raster/projection.hpp"
#include "dgs/scene/camera.hpp"
#include "dgs/scene/gaussian.hpp"

namespace dgs::testutil {

/// Random splats in a box in front of a standard test camera.
inline GaussianCloud random_cloud(int count, Pcg32& rng, double extent = 0.6,
                                  double center_z = 4.0) {
  GaussianCloud cloud;
  cloud.gaussians.reserve(count);
  for (int i = 0; i < count; ++i) {
    Gaussian g;
    g.position = Vec3(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                      center_z + rng.uniform(-extent, extent));
    const Vec4 q(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    g.rotation = Quat(q.w(), q.x(), q.y(), q.z()).normalized();
    g.log_scale = Vec3(rng.uniform(-3.5, -1.5), rng.uniform(-3.5, -1.5), rng.uniform(-3.5, -1.5));
    g.opacity_logit = rng.uniform(-2.0, 2.5);
    g.normal = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
    g.diffuse_albedo = Vec3(rng.next_double(), rng.next_double(), rng.next_double());
    g.roughness = rng.uniform(kMinRoughness, 1.0);
    g.specular_albedo = Vec3(rng.next_double(), rng.next_double(), rng.next_double());
    cloud.gaussians.push_back(g);
  }
  return cloud;
}

/// Camera at the origin looking down +z.
inline Camera test_camera(int width = 32, int height = 32, double focal = 40.0) {
  Camera cam;
  cam.fx = cam.fy = focal;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.width = width;
  cam.height = height;
  cam.near_z = 0.1;
  cam.far_z = 100.0;
  return cam;
}

/// Scalar per-pixel reference for the compositing equation: walks every
/// projected splat for every pixel applying only the contract rules (skip
/// below 1/255, stop below T = 1e-4). Independent of tiles and footprints.
inline void reference_composite(const std::vector<ProjectedGaussian>& projected,
                                const std::vector<double>& attrs, int channels, int width,
                                int height, Image& out_attr, Image& out_alpha) {
  out_attr = Image(width, height, channels);
  out_alpha = Image(width, height, 1);
  for (int py = 0; py < height; ++py) {
    for (int px = 0; px < width; ++px) {
      double transmittance = 1.0;
      for (size_t i = 0; i < projected.size(); ++i) {
        const ProjectedGaussian& pg = projected[i];
        const Vec2 d(px + 0.5 - pg.mean2d.x(), py + 0.5 - pg.mean2d.y());
        const double power = 0.5 * d.dot(pg.conic * d);
        const double a = pg.alpha_max * std::exp(-power);
        if (a < kMinSplatAlpha) continue;
        const double weight = a * transmittance;
        for (int c = 0; c < channels; ++c)
          out_attr.at(px, py, c) += weight * attrs[i * channels + c];
        out_alpha.at(px, py) += weight;
        transmittance *= 1.0 - a;
        if (transmittance < kTransmittanceStop) break;
      }
    }
  }
}

}  // namespace dgs::testutil
