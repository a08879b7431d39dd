// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/scene/camera.hpp"
#include "dgs/scene/gaussian.hpp"

namespace dgs {

Mat3 covariance_of(const Gaussian& g) {
  const Mat3 r = g.rotation.toRotationMatrix();
  const Vec3 s2 = g.scale().array().square();
  Mat3 cov = r * s2.asDiagonal() * r.transpose();
  // Force exact symmetry against rounding in the triple product.
  cov = 0.5 * (cov + cov.transpose()).eval();
  return cov;
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                       int width, int height) {
  Camera cam;
  const Vec3 fwd = (target - eye).normalized();      // camera +z
  const Vec3 right = fwd.cross(up).normalized();     // camera +x
  const Vec3 down = fwd.cross(right).normalized();   // camera +y (image y-down)
  Mat3 r;
  r.row(0) = right;
  r.row(1) = down;
  r.row(2) = fwd;
  cam.rotation = r;
  cam.translation = -(r * eye);
  cam.fx = cam.fy = focal;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.width = width;
  cam.height = height;
  return cam;
}

}  // namespace dgs
