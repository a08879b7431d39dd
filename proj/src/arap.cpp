// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/edit/arap.hpp"

#include <Eigen/Sparse>
#include <Eigen/SVD>

#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace dgs {

bool DeformationHandleSet::valid_for(const TriangleMesh& mesh) const {
  const int n = static_cast<int>(mesh.vertex_count());
  std::set<int> seen;
  for (const int v : fixed) {
    if (v < 0 || v >= n || !seen.insert(v).second) return false;
  }
  for (const int v : handles) {
    if (v < 0 || v >= n || !seen.insert(v).second) return false;
  }
  return handles.size() == handle_targets.size() && !handles.empty();
}

namespace {

struct EdgeWeights {
  // Symmetric cotangent weights as an adjacency list.
  std::vector<std::vector<std::pair<int, double>>> neighbors;
};

EdgeWeights cotangent_weights(const TriangleMesh& mesh) {
  const auto cot_at = [&](int apex, int a, int b) {
    const Vec3 u = mesh.vertices[a] - mesh.vertices[apex];
    const Vec3 v = mesh.vertices[b] - mesh.vertices[apex];
    const double cross = u.cross(v).norm();
    if (cross < 1e-14) return 0.0;
    // Clamp to keep the Laplacian positive semi-definite on poor triangles.
    return std::max(u.dot(v) / cross, 0.0);
  };
  std::unordered_map<uint64_t, double> w;
  const auto key = [](int a, int b) {
    return a < b ? (static_cast<uint64_t>(a) << 32 | b) : (static_cast<uint64_t>(b) << 32 | a);
  };
  for (const auto& t : mesh.triangles) {
    w[key(t[0], t[1])] += 0.5 * cot_at(t[2], t[0], t[1]);
    w[key(t[1], t[2])] += 0.5 * cot_at(t[0], t[1], t[2]);
    w[key(t[2], t[0])] += 0.5 * cot_at(t[1], t[2], t[0]);
  }
  EdgeWeights ew;
  ew.neighbors.resize(mesh.vertex_count());
  for (const auto& [k, weight] : w) {
    const int a = static_cast<int>(k >> 32);
    const int b = static_cast<int>(k & 0xffffffffu);
    ew.neighbors[a].push_back({b, weight});
    ew.neighbors[b].push_back({a, weight});
  }
  // Deterministic iteration order.
  for (auto& row : ew.neighbors)
    std::sort(row.begin(), row.end());
  return ew;
}

Mat3 fit_rotation(const Mat3& covariance) {
  Eigen::JacobiSVD<Mat3> svd(covariance, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixV() * svd.matrixU().transpose();
  if (r.determinant() < 0.0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixV() * flip * svd.matrixU().transpose();
  }
  // Snap essentially-identity fits so no-op deformations stay bit-exact.
  if ((r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9) r = Mat3::Identity();
  return r;
}

double arap_energy(const TriangleMesh& mesh, const std::vector<Vec3>& deformed,
                   const EdgeWeights& ew, const std::vector<Mat3>& rotations) {
  double e = 0.0;
  for (size_t i = 0; i < mesh.vertex_count(); ++i)
    for (const auto& [j, wij] : ew.neighbors[i]) {
      const Vec3 rest = mesh.vertices[i] - mesh.vertices[j];
      const Vec3 cur = deformed[i] - deformed[j];
      e += wij * (cur - rotations[i] * rest).squaredNorm();
    }
  return e;
}

}  // namespace

ArapResult arap_deform(const TriangleMesh& mesh, const DeformationHandleSet& handles,
                       int iterations) {
  if (!handles.valid_for(mesh))
    throw ConsistencyError("handle set invalid for this mesh (overlap, range, or empty)");
  const int n = static_cast<int>(mesh.vertex_count());
  const EdgeWeights ew = cotangent_weights(mesh);

  std::vector<bool> constrained(n, false);
  for (const int v : handles.fixed) constrained[v] = true;
  for (const int v : handles.handles) constrained[v] = true;
  std::vector<int> free_index(n, -1);
  int n_free = 0;
  for (int v = 0; v < n; ++v)
    if (!constrained[v]) free_index[v] = n_free++;

  ArapResult result;
  result.mesh = mesh;
  std::vector<Vec3>& p = result.mesh.vertices;
  for (size_t h = 0; h < handles.handles.size(); ++h)
    p[handles.handles[h]] = handles.handle_targets[h];

  result.rotations.assign(n, Mat3::Identity());

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  if (n_free > 0) {
    Eigen::SparseMatrix<double> laplacian(n_free, n_free);
    std::vector<Eigen::Triplet<double>> triplets;
    for (int v = 0; v < n; ++v) {
      if (constrained[v]) continue;
      double diag = 0.0;
      for (const auto& [j, wij] : ew.neighbors[v]) {
        diag += wij;
        if (!constrained[j]) triplets.push_back({free_index[v], free_index[j], -wij});
      }
      triplets.push_back({free_index[v], free_index[v], diag + 1e-12});
    }
    laplacian.setFromTriplets(triplets.begin(), triplets.end());
    solver.compute(laplacian);
    if (solver.info() != Eigen::Success)
      throw NumericalError("ARAP: cotangent Laplacian factorization failed");
  }

  // Incremental global solve for the current rotation field; a zero residual
  // leaves positions bit-unchanged.
  const auto global_step = [&]() {
    if (n_free == 0) return;
    Eigen::MatrixX3d residual = Eigen::MatrixX3d::Zero(n_free, 3);
    for (int v = 0; v < n; ++v) {
      if (constrained[v]) continue;
      Vec3 r = Vec3::Zero();
      for (const auto& [j, wij] : ew.neighbors[v]) {
        const Vec3 rest = mesh.vertices[v] - mesh.vertices[j];
        r += wij * (0.5 * (result.rotations[v] + result.rotations[j]) * rest - (p[v] - p[j]));
      }
      residual.row(free_index[v]) = r;
    }
    const Eigen::MatrixX3d delta = solver.solve(residual);
    if (solver.info() != Eigen::Success)
      throw NumericalError("ARAP: global solve failed");
    for (int v = 0; v < n; ++v)
      if (!constrained[v]) p[v] += delta.row(free_index[v]).transpose();
  };

  // Warm start: one identity-rotation solve (Laplacian editing) so rigid
  // constraint motions are satisfied before the first rotation fit.
  global_step();

  for (int iter = 0; iter < iterations; ++iter) {
    // Local step: best-fit rotation per vertex.
    for (int v = 0; v < n; ++v) {
      Mat3 cov = Mat3::Zero();
      for (const auto& [j, wij] : ew.neighbors[v])
        cov += wij * (mesh.vertices[v] - mesh.vertices[j]) * (p[v] - p[j]).transpose();
      result.rotations[v] = fit_rotation(cov);
    }

    global_step();

    result.energy.push_back(arap_energy(mesh, p, ew, result.rotations));
  }

  result.translations.resize(n);
  for (int v = 0; v < n; ++v) result.translations[v] = p[v] - mesh.vertices[v];
  return result;
}

DeformationHandleSet read_handle_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open handle file: " + path);
  DeformationHandleSet set;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    long index;
    if (!(ls >> index)) throw FormatError("bad handle line: " + line);
    if (index < 0) {
      set.fixed.push_back(static_cast<int>(-1 - index));
      continue;
    }
    Vec3 target;
    if (!(ls >> target.x() >> target.y() >> target.z()))
      throw FormatError("handle line lacks target coordinates: " + line);
    set.handles.push_back(static_cast<int>(index));
    set.handle_targets.push_back(target);
  }
  return set;
}

}  // namespace dgs
