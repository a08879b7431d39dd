// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dgs/core/mesh.hpp"
#include "dgs/sdf/grid.hpp"

namespace dgs {

class EmptyMeshError : public Error {
 public:
  EmptyMeshError() : Error("isosurface has no zero crossing inside the grid") {}
};

/// Marching-cubes triangulation of the level set values == iso. Shared cube
/// edges reuse vertices, so closed level sets produce watertight meshes.
/// Vertex normals come from the SDF gradient. Throws EmptyMeshError when the
/// grid never crosses the isovalue.
TriangleMesh extract_mesh(const SdfGrid& grid, double iso = 0.0);

}  // namespace dgs
