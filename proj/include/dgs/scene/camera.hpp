// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dgs/core/image.hpp"
#include "dgs/core/types.hpp"

namespace dgs {

/// Pinhole camera. Convention: world-to-camera rigid transform, right-handed,
/// camera looks down +z, image y grows downward. Pixel (x, y) has its center
/// at continuous coordinates (x + 0.5, y + 0.5).
struct Camera {
  Mat3 rotation = Mat3::Identity();   // world-to-camera
  Vec3 translation = Vec3::Zero();
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  double near_z = 0.01, far_z = 1e4;

  Vec3 world_to_camera(const Vec3& p) const { return rotation * p + translation; }
  Vec3 camera_center() const { return -(rotation.transpose() * translation); }

  /// Unit world-space direction through continuous image point (px, py).
  Vec3 ray_direction(double px, double py) const {
    const Vec3 d_cam((px - cx) / fx, (py - cy) / fy, 1.0);
    return (rotation.transpose() * d_cam).normalized();
  }

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && near_z > 0.0 && near_z < far_z;
  }

  /// Camera at `eye` looking at `target` (world up `up`), for tests and tools.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                        int width, int height);
};

/// One posed training capture: camera, RGB target in [0,1], scalar mask.
struct TrainView {
  Camera camera;
  Image image;  // 3 channels
  Image mask;   // 1 channel

  bool consistent() const {
    return image.width() == camera.width && image.height() == camera.height &&
           mask.width() == camera.width && mask.height() == camera.height &&
           image.channels() == 3 && mask.channels() == 1;
  }
};

}  // namespace dgs
