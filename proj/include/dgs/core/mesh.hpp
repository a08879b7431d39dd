// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include "dgs/core/types.hpp"

namespace dgs {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Vec3> normals;  // per vertex; may be empty
  std::vector<std::array<int, 3>> triangles;

  size_t vertex_count() const { return vertices.size(); }
  size_t triangle_count() const { return triangles.size(); }
  bool empty() const { return triangles.empty(); }

  /// Sum of triangle areas.
  double surface_area() const;

  /// Area-weighted vertex normals recomputed from the triangulation.
  void recompute_normals();
};

/// ASCII OBJ with per-vertex normals (v/vn, faces as i//i).
void write_obj(const std::string& path, const TriangleMesh& mesh);
TriangleMesh read_obj(const std::string& path);

}  // namespace dgs
