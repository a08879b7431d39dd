// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "dgs/scene/camera.hpp"
#include "dgs/scene/gaussian.hpp"

namespace dgs {

/// Per-splat alpha ceiling.
constexpr double kAlphaClampMax = 0.99;
/// Contributions below this alpha are skipped everywhere (forward, backward,
/// and the screen-space footprint bound are all derived from it).
constexpr double kMinSplatAlpha = 1.0 / 255.0;
/// Front-to-back accumulation stops once transmittance drops below this.
constexpr double kTransmittanceStop = 1e-4;
/// Diagonal regularizer added to every projected 2D covariance.
constexpr double kCovRegularization = 0.3;

/// A splat after EWA projection into one camera.
struct ProjectedGaussian {
  Vec2 mean2d = Vec2::Zero();   // pixels
  Mat2 cov2d = Mat2::Identity();  // pixels^2, regularized
  Mat2 conic = Mat2::Identity();  // inverse of cov2d
  double depth = 0.0;           // camera-space z
  int source_index = 0;
  double alpha_max = 0.0;       // opacity clamped at kAlphaClampMax
  // Inclusive pixel-index bounds of the axis-aligned box that contains every
  // pixel the splat can touch with alpha >= kMinSplatAlpha.
  int x_lo = 0, x_hi = -1, y_lo = 0, y_hi = -1;

  bool covers(int px, int py) const {
    return px >= x_lo && px <= x_hi && py >= y_lo && py <= y_hi;
  }
};

/// Projects the cloud; culls splats outside [near, far] or whose footprint
/// misses the image entirely. Output is sorted by ascending depth (ties
/// broken by source index), so it is independent of the thread count.
std::vector<ProjectedGaussian> project(const GaussianCloud& cloud, const Camera& cam,
                                       int threads = 1);

}  // namespace dgs
