// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/edit/binding.hpp"

#include <algorithm>
#include <numeric>

namespace dgs {

ClosestPoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                       const Vec3& c) {
  // Ericson, Real-Time Collision Detection, 5.1.5.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  ClosestPoint out;
  if (d1 <= 0.0 && d2 <= 0.0) {
    out.point = a;
    out.barycentric = Vec3(1, 0, 0);
  } else {
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) {
      out.point = b;
      out.barycentric = Vec3(0, 1, 0);
    } else {
      const double vc = d1 * d4 - d3 * d2;
      if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        out.point = a + v * ab;
        out.barycentric = Vec3(1 - v, v, 0);
      } else {
        const Vec3 cp = p - c;
        const double d5 = ab.dot(cp), d6 = ac.dot(cp);
        if (d6 >= 0.0 && d5 <= d6) {
          out.point = c;
          out.barycentric = Vec3(0, 0, 1);
        } else {
          const double vb = d5 * d2 - d1 * d6;
          if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
            const double w = d2 / (d2 - d6);
            out.point = a + w * ac;
            out.barycentric = Vec3(1 - w, 0, w);
          } else {
            const double va = d3 * d6 - d5 * d4;
            if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
              const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
              out.point = b + w * (c - b);
              out.barycentric = Vec3(0, 1 - w, w);
            } else {
              const double denom = 1.0 / (va + vb + vc);
              const double v = vb * denom, w = vc * denom;
              out.point = a + ab * v + ac * w;
              out.barycentric = Vec3(1 - v - w, v, w);
            }
          }
        }
      }
    }
  }
  out.sq_distance = (p - out.point).squaredNorm();
  return out;
}

MeshBvh::MeshBvh(const TriangleMesh& mesh) : mesh_(mesh) {
  order_.resize(mesh.triangle_count());
  std::iota(order_.begin(), order_.end(), 0);
  if (!order_.empty()) root_ = build(0, static_cast<int>(order_.size()), 0);
}

int MeshBvh::build(int begin, int end, int depth) {
  Node node;
  node.lo = Vec3::Constant(1e300);
  node.hi = Vec3::Constant(-1e300);
  for (int i = begin; i < end; ++i)
    for (const int v : mesh_.triangles[order_[i]]) {
      node.lo = node.lo.cwiseMin(mesh_.vertices[v]);
      node.hi = node.hi.cwiseMax(mesh_.vertices[v]);
    }
  const int count = end - begin;
  if (count <= 4 || depth > 40) {
    node.begin = begin;
    node.end = end;
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
  }
  int axis;
  (node.hi - node.lo).maxCoeff(&axis);
  const int mid = begin + count / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int ta, int tb) {
                     const auto centroid = [&](int t) {
                       return mesh_.vertices[mesh_.triangles[t][0]][axis] +
                              mesh_.vertices[mesh_.triangles[t][1]][axis] +
                              mesh_.vertices[mesh_.triangles[t][2]][axis];
                     };
                     const double ca = centroid(ta), cb = centroid(tb);
                     if (ca != cb) return ca < cb;
                     return ta < tb;
                   });
  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

namespace {

double box_sq_distance(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  double d = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double v = p[a] < lo[a] ? lo[a] - p[a] : (p[a] > hi[a] ? p[a] - hi[a] : 0.0);
    d += v * v;
  }
  return d;
}

}  // namespace

ClosestPoint MeshBvh::closest(const Vec3& query, int& triangle_out) const {
  if (root_ < 0) throw ConsistencyError("closest-point query on an empty mesh");
  ClosestPoint best;
  best.sq_distance = 1e300;
  triangle_out = -1;

  std::vector<int> stack = {root_};
  while (!stack.empty()) {
    const int ni = stack.back();
    stack.pop_back();
    const Node& node = nodes_[ni];
    if (box_sq_distance(query, node.lo, node.hi) >= best.sq_distance) continue;
    if (node.leaf()) {
      for (int i = node.begin; i < node.end; ++i) {
        const int t = order_[i];
        const auto& tri = mesh_.triangles[t];
        const ClosestPoint cp = closest_point_on_triangle(
            query, mesh_.vertices[tri[0]], mesh_.vertices[tri[1]], mesh_.vertices[tri[2]]);
        if (cp.sq_distance < best.sq_distance ||
            (cp.sq_distance == best.sq_distance && t < triangle_out)) {
          best = cp;
          triangle_out = t;
        }
      }
    } else {
      // Visit the nearer child first for tighter pruning.
      const double dl = box_sq_distance(query, nodes_[node.left].lo, nodes_[node.left].hi);
      const double dr = box_sq_distance(query, nodes_[node.right].lo, nodes_[node.right].hi);
      if (dl < dr) {
        stack.push_back(node.right);
        stack.push_back(node.left);
      } else {
        stack.push_back(node.left);
        stack.push_back(node.right);
      }
    }
  }
  return best;
}

bool MeshBvh::raycast(const Vec3& origin, const Vec3& dir, double& t_out, int& triangle_out,
                      Vec3& bary_out) const {
  if (root_ < 0) return false;
  double best_t = 1e300;
  triangle_out = -1;
  const Vec3 inv_dir = dir.cwiseInverse();

  const auto box_hit = [&](const Node& node) {
    double t0 = 0.0, t1 = best_t;
    for (int a = 0; a < 3; ++a) {
      double ta = (node.lo[a] - origin[a]) * inv_dir[a];
      double tb = (node.hi[a] - origin[a]) * inv_dir[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
    }
    return t0 <= t1;
  };

  std::vector<int> stack = {root_};
  while (!stack.empty()) {
    const int ni = stack.back();
    stack.pop_back();
    const Node& node = nodes_[ni];
    if (!box_hit(node)) continue;
    if (node.leaf()) {
      for (int i = node.begin; i < node.end; ++i) {
        const int t = order_[i];
        const auto& tri = mesh_.triangles[t];
        // Moller-Trumbore.
        const Vec3& a = mesh_.vertices[tri[0]];
        const Vec3 e1 = mesh_.vertices[tri[1]] - a;
        const Vec3 e2 = mesh_.vertices[tri[2]] - a;
        const Vec3 pv = dir.cross(e2);
        const double det = e1.dot(pv);
        if (std::abs(det) < 1e-14) continue;
        const double inv_det = 1.0 / det;
        const Vec3 tv = origin - a;
        const double u = tv.dot(pv) * inv_det;
        if (u < 0.0 || u > 1.0) continue;
        const Vec3 qv = tv.cross(e1);
        const double v = dir.dot(qv) * inv_det;
        if (v < 0.0 || u + v > 1.0) continue;
        const double hit_t = e2.dot(qv) * inv_det;
        if (hit_t > 1e-9 && hit_t < best_t) {
          best_t = hit_t;
          triangle_out = t;
          bary_out = Vec3(1 - u - v, u, v);
        }
      }
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  t_out = best_t;
  return triangle_out >= 0;
}

GaussianBinding bind_gaussians(const GaussianCloud& cloud, const TriangleMesh& mesh) {
  if (mesh.empty()) throw ConsistencyError("cannot bind to an empty mesh");
  const MeshBvh bvh(mesh);
  GaussianBinding binding;
  binding.triangle.resize(cloud.count());
  binding.barycentric.resize(cloud.count());
  for (size_t i = 0; i < cloud.count(); ++i) {
    int tri;
    const ClosestPoint cp = bvh.closest(cloud[i].position, tri);
    binding.triangle[i] = tri;
    binding.barycentric[i] = cp.barycentric;
  }
  return binding;
}

GaussianCloud apply_deformation(const GaussianCloud& cloud, const GaussianBinding& binding,
                                const TriangleMesh& source_mesh,
                                const std::vector<Mat3>& rotations,
                                const std::vector<Vec3>& translations) {
  if (binding.count() != cloud.count())
    throw ConsistencyError("binding does not match the cloud");
  GaussianCloud out = cloud;
  for (size_t i = 0; i < cloud.count(); ++i) {
    const auto& tri = source_mesh.triangles[binding.triangle[i]];
    const Vec3& bary = binding.barycentric[i];

    const Vec3 p_ref = bary[0] * source_mesh.vertices[tri[0]] +
                       bary[1] * source_mesh.vertices[tri[1]] +
                       bary[2] * source_mesh.vertices[tri[2]];
    const Vec3 t = bary[0] * translations[tri[0]] + bary[1] * translations[tri[1]] +
                   bary[2] * translations[tri[2]];

    // Barycentric rotation blend via sign-aligned quaternion averaging.
    const Quat q0(rotations[tri[0]]);
    Quat q1(rotations[tri[1]]);
    Quat q2(rotations[tri[2]]);
    if (q0.coeffs().dot(q1.coeffs()) < 0.0) q1.coeffs() = -q1.coeffs();
    if (q0.coeffs().dot(q2.coeffs()) < 0.0) q2.coeffs() = -q2.coeffs();
    Quat q;
    q.coeffs() = bary[0] * q0.coeffs() + bary[1] * q1.coeffs() + bary[2] * q2.coeffs();
    const double qlen = q.norm();
    if (qlen < 1e-12)
      q = q0;
    else
      q.coeffs() /= qlen;  // x/x == 1 exactly, so identity blends stay exact
    const Mat3 rot = q.toRotationMatrix();

    Gaussian& g = out.gaussians[i];
    const Vec3 offset = g.position - p_ref;
    // Written as position + correction so identity motion is exact.
    g.position = g.position + (rot * offset - offset) + t;
    g.rotation = (q * g.rotation);
    const double rnorm = g.rotation.norm();
    if (std::abs(rnorm - 1.0) > 1e-12) g.rotation.coeffs() /= rnorm;
    g.normal = rot * g.normal;
    const double nlen = g.normal.norm();
    if (nlen > 1e-12 && std::abs(nlen - 1.0) > 1e-12) g.normal /= nlen;
  }
  return out;
}

}  // namespace dgs
