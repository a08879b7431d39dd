// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include "dgs/core/types.hpp"

namespace dgs {

/// Evaluates the 9 real SH basis functions (bands 0..2) at a unit direction.
std::array<double, 9> sh2_basis(const Vec3& dir);

/// Dense trilinear signed-distance grid with decomposed appearance:
/// per-vertex SDF value, diffuse color c_d and specular tint p, a global
/// order-2 SH view-lighting function c_l, and the NeuS deviation parameter
/// (stored as log s). Negative values are inside.
struct SdfGrid {
  Eigen::Vector3i cells = Eigen::Vector3i(128, 128, 128);
  Vec3 bounds_min = Vec3::Constant(-1.0);
  Vec3 bounds_max = Vec3::Constant(1.0);
  std::vector<double> values;    // per vertex
  std::vector<Vec3> diffuse;     // c_d per vertex
  std::vector<double> tint;      // p per vertex, in [0,1]
  std::array<Vec3, 9> view_sh = zero_sh();  // c_l coefficients (RGB per basis)
  double log_deviation = 0.0;    // s = exp(log_deviation) > 0

  static std::array<Vec3, 9> zero_sh() {
    std::array<Vec3, 9> a;
    a.fill(Vec3::Zero());
    return a;
  }

  double deviation() const { return std::exp(log_deviation); }

  int nx() const { return cells.x() + 1; }
  int ny() const { return cells.y() + 1; }
  int nz() const { return cells.z() + 1; }
  size_t vertex_count() const { return static_cast<size_t>(nx()) * ny() * nz(); }
  size_t vertex_index(int i, int j, int k) const {
    return (static_cast<size_t>(k) * ny() + j) * nx() + i;
  }
  Vec3 vertex_position(int i, int j, int k) const;
  Vec3 cell_size() const {
    return (bounds_max - bounds_min).cwiseQuotient(cells.cast<double>());
  }

  /// Grid warm start: SDF of a centered sphere (radius defaults to half the
  /// smallest half-extent), mid-gray appearance, deviation s0.
  static SdfGrid make_sphere(const Eigen::Vector3i& cells, const Vec3& bounds_min,
                             const Vec3& bounds_max, double radius = -1.0, double s0 = 20.0);

  /// Trilinear SDF value. Outside the bounds the query is clamped onto the
  /// box and the Euclidean distance to the box is added.
  double sample(const Vec3& x) const;

  /// Analytic spatial gradient of the trilinear interpolant (piecewise per
  /// cell). Outside the bounds: the distance-to-box direction.
  Vec3 gradient(const Vec3& x) const;

  Vec3 sample_diffuse(const Vec3& x) const;
  double sample_tint(const Vec3& x) const;
  /// c_l evaluated for a view direction.
  Vec3 view_lighting(const Vec3& dir) const;

  /// Adjoints: accumulate d(loss)/d(vertex arrays) for the lookups above.
  void splat_value(const Vec3& x, double grad, std::vector<double>& d_values) const;
  void splat_gradient(const Vec3& x, const Vec3& grad, std::vector<double>& d_values) const;
  void splat_diffuse(const Vec3& x, const Vec3& grad, std::vector<Vec3>& d_diffuse) const;
  void splat_tint(const Vec3& x, double grad, std::vector<double>& d_tint) const;

  void clamp_invariants();
};

/// Checkpoint: little-endian block with header (resolution, bounds, log s)
/// followed by the value/appearance arrays.
void save_grid(const SdfGrid& grid, const std::string& path);
SdfGrid load_grid(const std::string& path);

}  // namespace dgs
