// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dgs/core/mesh.hpp"

namespace dgs {

/// Deformation constraints: fixed vertices pinned in place, handle vertices
/// pinned at explicit targets. The two sets must be disjoint.
struct DeformationHandleSet {
  std::vector<int> fixed;
  std::vector<int> handles;
  std::vector<Vec3> handle_targets;

  bool valid_for(const TriangleMesh& mesh) const;
};

struct ArapResult {
  TriangleMesh mesh;                 // deformed copy
  std::vector<Mat3> rotations;       // per-vertex local rotation
  std::vector<Vec3> translations;    // per-vertex displacement p' - p
  std::vector<double> energy;        // ARAP energy after each iteration
};

/// As-rigid-as-possible deformation: alternating per-vertex rotation fits
/// (SVD of the weighted edge covariance) and a global cotangent-Laplacian
/// solve with the constraints enforced exactly. Energy is non-increasing
/// across iterations; identity constraints return the mesh bit-unchanged.
/// Throws NumericalError if the factorization fails.
ArapResult arap_deform(const TriangleMesh& mesh, const DeformationHandleSet& handles,
                       int iterations);

/// Parses "index x y z" lines into handles (negative index rows mark fixed
/// vertices as "-1-index").
DeformationHandleSet read_handle_file(const std::string& path);

}  // namespace dgs
