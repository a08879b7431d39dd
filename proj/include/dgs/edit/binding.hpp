// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dgs/core/mesh.hpp"
#include "dgs/scene/gaussian.hpp"

namespace dgs {

/// Per-Gaussian attachment to its closest mesh surface point.
struct GaussianBinding {
  std::vector<int> triangle;
  std::vector<Vec3> barycentric;  // components >= 0, summing to 1

  size_t count() const { return triangle.size(); }
};

/// Closest point on a triangle plus its barycentric coordinates.
struct ClosestPoint {
  Vec3 point;
  Vec3 barycentric;
  double sq_distance;
};
ClosestPoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                       const Vec3& c);

/// Axis-aligned BVH over triangles supporting exact closest-point queries.
class MeshBvh {
 public:
  explicit MeshBvh(const TriangleMesh& mesh);

  /// Exact nearest surface point (ties broken toward the lower triangle id).
  ClosestPoint closest(const Vec3& query, int& triangle_out) const;

  /// First ray intersection; returns false on a miss.
  bool raycast(const Vec3& origin, const Vec3& dir, double& t_out, int& triangle_out,
               Vec3& bary_out) const;

 private:
  struct Node {
    Vec3 lo, hi;
    int left = -1, right = -1;   // internal children
    int begin = 0, end = 0;      // leaf triangle range
    bool leaf() const { return left < 0; }
  };
  int build(int begin, int end, int depth);

  const TriangleMesh& mesh_;
  std::vector<int> order_;  // triangle ids, partitioned by the tree
  std::vector<Node> nodes_;
  int root_ = -1;
};

/// Closest-neighbor binding of every splat to the mesh surface.
GaussianBinding bind_gaussians(const GaussianCloud& cloud, const TriangleMesh& mesh);

/// Applies barycentrically interpolated per-vertex rigid motions to the
/// cloud: position moves with the bound surface point, the covariance is
/// conjugated (quaternion left-multiplied) and the normal rotated. Identity
/// motion returns the cloud bit-unchanged.
GaussianCloud apply_deformation(const GaussianCloud& cloud, const GaussianBinding& binding,
                                const TriangleMesh& source_mesh,
                                const std::vector<Mat3>& rotations,
                                const std::vector<Vec3>& translations);

}  // namespace dgs
