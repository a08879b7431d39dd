// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/sdf/grid.hpp"

#include <cstring>
#include <fstream>

namespace dgs {

std::array<double, 9> sh2_basis(const Vec3& d) {
  // Real spherical harmonics, bands 0-2, standard normalization.
  const double x = d.x(), y = d.y(), z = d.z();
  return {
      0.28209479177387814,
      0.4886025119029199 * y,
      0.4886025119029199 * z,
      0.4886025119029199 * x,
      1.0925484305920792 * x * y,
      1.0925484305920792 * y * z,
      0.31539156525252005 * (3.0 * z * z - 1.0),
      1.0925484305920792 * x * z,
      0.5462742152960396 * (x * x - y * y),
  };
}

Vec3 SdfGrid::vertex_position(int i, int j, int k) const {
  const Vec3 h = cell_size();
  return bounds_min + Vec3(i * h.x(), j * h.y(), k * h.z());
}

SdfGrid SdfGrid::make_sphere(const Eigen::Vector3i& cells, const Vec3& bounds_min,
                             const Vec3& bounds_max, double radius, double s0) {
  SdfGrid grid;
  grid.cells = cells;
  grid.bounds_min = bounds_min;
  grid.bounds_max = bounds_max;
  if (radius <= 0.0) radius = 0.25 * (bounds_max - bounds_min).minCoeff();
  const Vec3 center = 0.5 * (bounds_min + bounds_max);
  grid.values.resize(grid.vertex_count());
  grid.diffuse.assign(grid.vertex_count(), Vec3::Constant(0.5));
  grid.tint.assign(grid.vertex_count(), 0.0);
  grid.log_deviation = std::log(s0);
  for (int k = 0; k < grid.nz(); ++k)
    for (int j = 0; j < grid.ny(); ++j)
      for (int i = 0; i < grid.nx(); ++i)
        grid.values[grid.vertex_index(i, j, k)] =
            (grid.vertex_position(i, j, k) - center).norm() - radius;
  return grid;
}

namespace {

struct CellCoords {
  int i, j, k;         // base vertex
  double u, v, w;      // local coordinates in [0,1]
  bool outside;
  Vec3 clamped;        // query clamped onto the bounds
  double box_distance; // Euclidean distance from x to the box
  Vec3 box_dir;        // unit direction from the box to x (zero if inside)
};

CellCoords locate(const SdfGrid& g, const Vec3& x) {
  CellCoords c;
  c.clamped = x.cwiseMax(g.bounds_min).cwiseMin(g.bounds_max);
  const Vec3 offset = x - c.clamped;
  c.box_distance = offset.norm();
  c.outside = c.box_distance > 0.0;
  c.box_dir = c.outside ? Vec3(offset / c.box_distance) : Vec3::Zero();

  const Vec3 h = g.cell_size();
  const Vec3 local = (c.clamped - g.bounds_min).cwiseQuotient(h);
  c.i = std::min(static_cast<int>(local.x()), g.cells.x() - 1);
  c.j = std::min(static_cast<int>(local.y()), g.cells.y() - 1);
  c.k = std::min(static_cast<int>(local.z()), g.cells.z() - 1);
  c.i = std::max(c.i, 0);
  c.j = std::max(c.j, 0);
  c.k = std::max(c.k, 0);
  c.u = local.x() - c.i;
  c.v = local.y() - c.j;
  c.w = local.z() - c.k;
  return c;
}

// Trilinear corner weights in the fixed (i,j,k) bit order.
void corner_weights(const CellCoords& c, double wts[8]) {
  const double u1 = 1 - c.u, v1 = 1 - c.v, w1 = 1 - c.w;
  wts[0] = u1 * v1 * w1;
  wts[1] = c.u * v1 * w1;
  wts[2] = u1 * c.v * w1;
  wts[3] = c.u * c.v * w1;
  wts[4] = u1 * v1 * c.w;
  wts[5] = c.u * v1 * c.w;
  wts[6] = u1 * c.v * c.w;
  wts[7] = c.u * c.v * c.w;
}

size_t corner_index(const SdfGrid& g, const CellCoords& c, int corner) {
  return g.vertex_index(c.i + (corner & 1), c.j + ((corner >> 1) & 1),
                        c.k + ((corner >> 2) & 1));
}

template <typename T>
T trilinear(const SdfGrid& g, const std::vector<T>& field, const CellCoords& c) {
  double wts[8];
  corner_weights(c, wts);
  T out = wts[0] * field[corner_index(g, c, 0)];
  for (int corner = 1; corner < 8; ++corner)
    out += wts[corner] * field[corner_index(g, c, corner)];
  return out;
}

}  // namespace

double SdfGrid::sample(const Vec3& x) const {
  const CellCoords c = locate(*this, x);
  return trilinear(*this, values, c) + c.box_distance;
}

Vec3 SdfGrid::gradient(const Vec3& x) const {
  const CellCoords c = locate(*this, x);
  if (c.outside) return c.box_dir;
  const Vec3 h = cell_size();
  const double u1 = 1 - c.u, v1 = 1 - c.v, w1 = 1 - c.w;
  double f[8];
  for (int corner = 0; corner < 8; ++corner) f[corner] = values[corner_index(*this, c, corner)];
  const double dx = (f[1] - f[0]) * v1 * w1 + (f[3] - f[2]) * c.v * w1 +
                    (f[5] - f[4]) * v1 * c.w + (f[7] - f[6]) * c.v * c.w;
  const double dy = (f[2] - f[0]) * u1 * w1 + (f[3] - f[1]) * c.u * w1 +
                    (f[6] - f[4]) * u1 * c.w + (f[7] - f[5]) * c.u * c.w;
  const double dz = (f[4] - f[0]) * u1 * v1 + (f[5] - f[1]) * c.u * v1 +
                    (f[6] - f[2]) * u1 * c.v + (f[7] - f[3]) * c.u * c.v;
  return Vec3(dx / h.x(), dy / h.y(), dz / h.z());
}

Vec3 SdfGrid::sample_diffuse(const Vec3& x) const {
  return trilinear(*this, diffuse, locate(*this, x));
}

double SdfGrid::sample_tint(const Vec3& x) const {
  return trilinear(*this, tint, locate(*this, x));
}

Vec3 SdfGrid::view_lighting(const Vec3& dir) const {
  const std::array<double, 9> basis = sh2_basis(dir);
  Vec3 out = Vec3::Zero();
  for (int k = 0; k < 9; ++k) out += basis[k] * view_sh[k];
  return out;
}

void SdfGrid::splat_value(const Vec3& x, double grad, std::vector<double>& d_values) const {
  const CellCoords c = locate(*this, x);
  double wts[8];
  corner_weights(c, wts);
  for (int corner = 0; corner < 8; ++corner)
    d_values[corner_index(*this, c, corner)] += grad * wts[corner];
}

void SdfGrid::splat_gradient(const Vec3& x, const Vec3& grad,
                             std::vector<double>& d_values) const {
  const CellCoords c = locate(*this, x);
  if (c.outside) return;  // box fallback carries no value gradient
  const Vec3 h = cell_size();
  const double gx = grad.x() / h.x(), gy = grad.y() / h.y(), gz = grad.z() / h.z();
  const double u1 = 1 - c.u, v1 = 1 - c.v, w1 = 1 - c.w;
  double d[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  // dx couples (0,1),(2,3),(4,5),(6,7); dy couples (0,2)...; dz (0,4)...
  d[0] += -gx * v1 * w1; d[1] += gx * v1 * w1;
  d[2] += -gx * c.v * w1; d[3] += gx * c.v * w1;
  d[4] += -gx * v1 * c.w; d[5] += gx * v1 * c.w;
  d[6] += -gx * c.v * c.w; d[7] += gx * c.v * c.w;
  d[0] += -gy * u1 * w1; d[2] += gy * u1 * w1;
  d[1] += -gy * c.u * w1; d[3] += gy * c.u * w1;
  d[4] += -gy * u1 * c.w; d[6] += gy * u1 * c.w;
  d[5] += -gy * c.u * c.w; d[7] += gy * c.u * c.w;
  d[0] += -gz * u1 * v1; d[4] += gz * u1 * v1;
  d[1] += -gz * c.u * v1; d[5] += gz * c.u * v1;
  d[2] += -gz * u1 * c.v; d[6] += gz * u1 * c.v;
  d[3] += -gz * c.u * c.v; d[7] += gz * c.u * c.v;
  for (int corner = 0; corner < 8; ++corner)
    d_values[corner_index(*this, c, corner)] += d[corner];
}

void SdfGrid::splat_diffuse(const Vec3& x, const Vec3& grad, std::vector<Vec3>& d_diffuse) const {
  const CellCoords c = locate(*this, x);
  double wts[8];
  corner_weights(c, wts);
  for (int corner = 0; corner < 8; ++corner)
    d_diffuse[corner_index(*this, c, corner)] += grad * wts[corner];
}

void SdfGrid::splat_tint(const Vec3& x, double grad, std::vector<double>& d_tint) const {
  const CellCoords c = locate(*this, x);
  double wts[8];
  corner_weights(c, wts);
  for (int corner = 0; corner < 8; ++corner)
    d_tint[corner_index(*this, c, corner)] += grad * wts[corner];
}

void SdfGrid::clamp_invariants() {
  for (double& p : tint) p = clamp01(p);
  for (Vec3& c : diffuse)
    for (int ch = 0; ch < 3; ++ch) c[ch] = clamped(c[ch], 0.0, 10.0);
  log_deviation = clamped(log_deviation, std::log(1e-2), std::log(1e4));
}

namespace {

constexpr char kGridMagic[4] = {'S', 'D', 'G', '1'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("truncated grid file");
  return v;
}

}  // namespace

void save_grid(const SdfGrid& grid, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for write: " + path);
  out.write(kGridMagic, 4);
  for (int a = 0; a < 3; ++a) put(out, static_cast<uint32_t>(grid.cells[a]));
  for (int a = 0; a < 3; ++a) put(out, grid.bounds_min[a]);
  for (int a = 0; a < 3; ++a) put(out, grid.bounds_max[a]);
  put(out, grid.log_deviation);
  for (const double v : grid.values) put(out, v);
  for (const Vec3& c : grid.diffuse)
    for (int a = 0; a < 3; ++a) put(out, c[a]);
  for (const double p : grid.tint) put(out, p);
  for (const Vec3& c : grid.view_sh)
    for (int a = 0; a < 3; ++a) put(out, c[a]);
  if (!out) throw FormatError("grid write failed: " + path);
}

SdfGrid load_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open grid: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kGridMagic, 4) != 0)
    throw FormatError("bad grid magic in " + path);
  SdfGrid grid;
  for (int a = 0; a < 3; ++a) grid.cells[a] = static_cast<int>(get<uint32_t>(in));
  for (int a = 0; a < 3; ++a) grid.bounds_min[a] = get<double>(in);
  for (int a = 0; a < 3; ++a) grid.bounds_max[a] = get<double>(in);
  grid.log_deviation = get<double>(in);
  grid.values.resize(grid.vertex_count());
  for (double& v : grid.values) v = get<double>(in);
  grid.diffuse.resize(grid.vertex_count());
  for (Vec3& c : grid.diffuse)
    for (int a = 0; a < 3; ++a) c[a] = get<double>(in);
  grid.tint.resize(grid.vertex_count());
  for (double& p : grid.tint) p = get<double>(in);
  for (Vec3& c : grid.view_sh)
    for (int a = 0; a < 3; ++a) c[a] = get<double>(in);
  return grid;
}

}  // namespace dgs
