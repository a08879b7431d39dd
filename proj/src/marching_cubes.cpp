// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/sdf/marching_cubes.hpp"

#include <cstdint>
#include <unordered_map>

namespace dgs {

#include "mc_tables.inc"

namespace {

// Cube corner offsets in the Lorensen layout.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeCorners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                     {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

}  // namespace

TriangleMesh extract_mesh(const SdfGrid& grid, double iso) {
  TriangleMesh mesh;
  // Key: the two grid-vertex ids bounding the crossed edge; shared edges then
  // reuse one mesh vertex, which is what makes closed level sets watertight.
  std::unordered_map<uint64_t, int> edge_vertices;

  const auto edge_vertex = [&](size_t va, size_t vb, const Vec3& pa, const Vec3& pb, double fa,
                               double fb) {
    const uint64_t key = va < vb ? (static_cast<uint64_t>(va) << 32 | vb)
                                 : (static_cast<uint64_t>(vb) << 32 | va);
    auto it = edge_vertices.find(key);
    if (it != edge_vertices.end()) return it->second;
    double t = (iso - fa) / (fb - fa);
    t = clamped(t, 0.0, 1.0);
    mesh.vertices.push_back(pa + t * (pb - pa));
    const int index = static_cast<int>(mesh.vertices.size()) - 1;
    edge_vertices.emplace(key, index);
    return index;
  };

  for (int k = 0; k < grid.cells.z(); ++k) {
    for (int j = 0; j < grid.cells.y(); ++j) {
      for (int i = 0; i < grid.cells.x(); ++i) {
        double f[8];
        size_t vid[8];
        Vec3 pos[8];
        int cube_index = 0;
        for (int c = 0; c < 8; ++c) {
          const int ci = i + kCorner[c][0], cj = j + kCorner[c][1], ck = k + kCorner[c][2];
          vid[c] = grid.vertex_index(ci, cj, ck);
          f[c] = grid.values[vid[c]];
          pos[c] = grid.vertex_position(ci, cj, ck);
          if (f[c] < iso) cube_index |= 1 << c;
        }
        if (kEdgeTable[cube_index] == 0) continue;

        int verts_on_edge[12];
        for (int e = 0; e < 12; ++e) {
          if (!(kEdgeTable[cube_index] & (1 << e))) continue;
          const int a = kEdgeCorners[e][0], b = kEdgeCorners[e][1];
          verts_on_edge[e] = edge_vertex(vid[a], vid[b], pos[a], pos[b], f[a], f[b]);
        }
        for (int t = 0; kTriTable[cube_index][t] != -1; t += 3) {
          mesh.triangles.push_back({verts_on_edge[kTriTable[cube_index][t]],
                                    verts_on_edge[kTriTable[cube_index][t + 1]],
                                    verts_on_edge[kTriTable[cube_index][t + 2]]});
        }
      }
    }
  }

  if (mesh.triangles.empty()) throw EmptyMeshError();

  mesh.normals.resize(mesh.vertices.size());
  for (size_t v = 0; v < mesh.vertices.size(); ++v) {
    const Vec3 g = grid.gradient(mesh.vertices[v]);
    const double len = g.norm();
    mesh.normals[v] = len > 1e-12 ? Vec3(g / len) : Vec3::UnitZ();
  }
  return mesh;
}

}  // namespace dgs
