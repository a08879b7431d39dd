// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/raster/projection.hpp"

#include <algorithm>

#include "dgs/core/parallel.hpp"

namespace dgs {

namespace {

bool project_one(const Gaussian& g, const Camera& cam, const Mat3& w, double lim_x,
                 double lim_y, int index, ProjectedGaussian& pg) {
  const Vec3 t = cam.world_to_camera(g.position);
  if (t.z() < cam.near_z || t.z() > cam.far_z) return false;

  const double amax = std::min(g.opacity(), kAlphaClampMax);
  if (amax < kMinSplatAlpha) return false;  // never exceeds the skip threshold

  pg.source_index = index;
  pg.depth = t.z();
  pg.mean2d = Vec2(cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy);
  pg.alpha_max = amax;

  const double tzinv = 1.0 / t.z();
  const double x_c = clamped(t.x() * tzinv, -lim_x, lim_x) * t.z();
  const double y_c = clamped(t.y() * tzinv, -lim_y, lim_y) * t.z();
  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx * tzinv, 0.0, -cam.fx * x_c * tzinv * tzinv,
         0.0, cam.fy * tzinv, -cam.fy * y_c * tzinv * tzinv;

  const Mat3 cov_world = covariance_of(g);
  Mat2 cov2d = jac * w * cov_world * w.transpose() * jac.transpose();
  cov2d(0, 0) += kCovRegularization;
  cov2d(1, 1) += kCovRegularization;
  pg.cov2d = 0.5 * (cov2d + cov2d.transpose());

  const double det = pg.cov2d(0, 0) * pg.cov2d(1, 1) - pg.cov2d(0, 1) * pg.cov2d(1, 0);
  if (det <= 0.0 || !std::isfinite(det)) return false;
  pg.conic << pg.cov2d(1, 1) / det, -pg.cov2d(0, 1) / det,
              -pg.cov2d(1, 0) / det, pg.cov2d(0, 0) / det;

  // Footprint: pixels beyond the alpha_max * G >= kMinSplatAlpha iso-ellipse
  // can never pass the skip test. m2 is its squared Mahalanobis radius.
  const double m2 = 2.0 * std::log(amax / kMinSplatAlpha);
  const double rx = std::sqrt(std::max(0.0, m2 * pg.cov2d(0, 0))) + 1e-9;
  const double ry = std::sqrt(std::max(0.0, m2 * pg.cov2d(1, 1))) + 1e-9;
  // Pixel (ix, iy) has center (ix + 0.5, iy + 0.5).
  pg.x_lo = std::max(0, static_cast<int>(std::ceil(pg.mean2d.x() - rx - 0.5)));
  pg.x_hi = std::min(cam.width - 1, static_cast<int>(std::floor(pg.mean2d.x() + rx - 0.5)));
  pg.y_lo = std::max(0, static_cast<int>(std::ceil(pg.mean2d.y() - ry - 0.5)));
  pg.y_hi = std::min(cam.height - 1, static_cast<int>(std::floor(pg.mean2d.y() + ry - 0.5)));
  return pg.x_lo <= pg.x_hi && pg.y_lo <= pg.y_hi;
}

}  // namespace

std::vector<ProjectedGaussian> project(const GaussianCloud& cloud, const Camera& cam,
                                       int threads) {
  const Mat3 w = cam.rotation;
  // Frustum clamp for the local-affine Jacobian, as in standard splatting.
  const double lim_x = 1.3 * (0.5 * cam.width / cam.fx);
  const double lim_y = 1.3 * (0.5 * cam.height / cam.fy);

  const int workers = std::max(1, threads);
  std::vector<std::vector<ProjectedGaussian>> partial(workers);
  parallel_for(static_cast<int64_t>(cloud.count()), workers,
               [&](int64_t begin, int64_t end, int worker) {
    auto& local = partial[worker];
    local.reserve(end - begin);
    ProjectedGaussian pg;
    for (int64_t i = begin; i < end; ++i)
      if (project_one(cloud[i], cam, w, lim_x, lim_y, static_cast<int>(i), pg))
        local.push_back(pg);
  });

  std::vector<ProjectedGaussian> out;
  out.reserve(cloud.count());
  for (auto& local : partial)
    out.insert(out.end(), local.begin(), local.end());

  // The global order is a total order on (depth, index): output independent
  // of the worker count.
  std::sort(out.begin(), out.end(), [](const ProjectedGaussian& a, const ProjectedGaussian& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.source_index < b.source_index;
  });
  return out;
}

}  // namespace dgs
