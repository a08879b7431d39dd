// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <vector>

#include "dgs/core/image.hpp"
#include "dgs/core/types.hpp"

namespace dgs {

/// Six-face HDR radiance cube map, linear RGB, texels >= 0.
/// Face order and orientations follow the usual GL convention:
/// 0:+x 1:-x 2:+y 3:-y 4:+z 5:-z.
class CubeMap {
 public:
  CubeMap() = default;
  explicit CubeMap(int face_res, const Vec3& fill = Vec3::Zero());

  int face_res() const { return face_res_; }
  bool empty() const { return face_res_ == 0; }

  Vec3& texel(int face, int x, int y) { return texels_[index(face, x, y)]; }
  const Vec3& texel(int face, int x, int y) const { return texels_[index(face, x, y)]; }

  std::vector<Vec3>& texels() { return texels_; }
  const std::vector<Vec3>& texels() const { return texels_; }
  size_t texel_count() const { return texels_.size(); }

  /// Unit direction through the center of a texel.
  Vec3 texel_direction(int face, int x, int y) const;

  /// Bilinear lookup within the dominant face of `dir` (|dir| = 1),
  /// clamped at face edges. Deterministic.
  Vec3 sample(const Vec3& dir) const;

  /// Adjoint of sample(): scatters `grad` into the four texels the lookup
  /// blended, with the same weights.
  void splat_gradient(const Vec3& dir, const Vec3& grad);

  /// Bilinear lookup plus the 3x3 Jacobian d(value)/d(dir components). The
  /// face mapping is invariant to positive scaling of dir, so the Jacobian
  /// has a null direction along dir; it is exact away from face seams and
  /// edge clamps (zero across them).
  Vec3 sample_with_jacobian(const Vec3& dir, Mat3& jacobian) const;

  /// Face index plus in-face coordinates u,v in [0,1] for a direction.
  static void direction_to_face_uv(const Vec3& dir, int& face, double& u, double& v);
  /// Unit direction for face coordinates u,v in [0,1].
  static Vec3 face_uv_to_direction(int face, double u, double v);

  bool finite_nonnegative() const;

 private:
  size_t index(int face, int x, int y) const {
    return (static_cast<size_t>(face) * face_res_ + y) * face_res_ + x;
  }

  int face_res_ = 0;
  std::vector<Vec3> texels_;
};

/// Equirectangular (lat-long) conversions; `width` is 2x `height`.
Image cubemap_to_equirect(const CubeMap& map, int height);
CubeMap equirect_to_cubemap(const Image& latlong, int face_res);

}  // namespace dgs
