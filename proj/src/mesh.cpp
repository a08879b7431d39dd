// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/core/mesh.hpp"

#include <fstream>
#include <sstream>

namespace dgs {

double TriangleMesh::surface_area() const {
  double area = 0.0;
  for (const auto& t : triangles) {
    const Vec3 e1 = vertices[t[1]] - vertices[t[0]];
    const Vec3 e2 = vertices[t[2]] - vertices[t[0]];
    area += 0.5 * e1.cross(e2).norm();
  }
  return area;
}

void TriangleMesh::recompute_normals() {
  normals.assign(vertices.size(), Vec3::Zero());
  for (const auto& t : triangles) {
    const Vec3 fn = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
    normals[t[0]] += fn;
    normals[t[1]] += fn;
    normals[t[2]] += fn;
  }
  for (Vec3& n : normals) {
    const double len = n.norm();
    if (len > 1e-20) n /= len;
  }
}

void write_obj(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open for write: " + path);
  out.precision(9);
  for (const Vec3& v : mesh.vertices) out << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
  for (const Vec3& n : mesh.normals) out << "vn " << n.x() << " " << n.y() << " " << n.z() << "\n";
  const bool has_normals = mesh.normals.size() == mesh.vertices.size();
  for (const auto& t : mesh.triangles) {
    if (has_normals)
      out << "f " << t[0] + 1 << "//" << t[0] + 1 << " " << t[1] + 1 << "//" << t[1] + 1 << " "
          << t[2] + 1 << "//" << t[2] + 1 << "\n";
    else
      out << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
  }
}

TriangleMesh read_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open OBJ: " + path);
  TriangleMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 v;
      ls >> v.x() >> v.y() >> v.z();
      mesh.vertices.push_back(v);
    } else if (tag == "vn") {
      Vec3 n;
      ls >> n.x() >> n.y() >> n.z();
      mesh.normals.push_back(n);
    } else if (tag == "f") {
      std::array<int, 3> tri{};
      for (int k = 0; k < 3; ++k) {
        std::string tok;
        if (!(ls >> tok)) throw FormatError("bad face line in " + path);
        tri[k] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      mesh.triangles.push_back(tri);
    }
  }
  if (mesh.normals.size() != mesh.vertices.size()) mesh.normals.clear();
  return mesh;
}

}  // namespace dgs
