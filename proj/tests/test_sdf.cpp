// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>

#include "dgs/sdf/marching_cubes.hpp"
#include "dgs/sdf/neus.hpp"
#include "test_utils.hpp"

using namespace dgs;

namespace {

SdfGrid sphere_grid(int cells = 32, double radius = 0.5) {
  return SdfGrid::make_sphere(Eigen::Vector3i::Constant(cells), Vec3::Constant(-1.0),
                              Vec3::Constant(1.0), radius);
}

RaySampleBatch single_ray_batch(const SdfGrid& grid, const Ray& ray, int samples) {
  Pcg32 rng(1);
  return make_ray_batch(grid, {ray}, samples, 0, rng);
}

}  // namespace

TEST_CASE("sdf sample: level-set membership on a sphere grid") {
  const SdfGrid grid = sphere_grid();
  const double cell = grid.cell_size().x();
  Pcg32 rng(2);
  for (int i = 0; i < 50; ++i) {
    const Vec3 dir =
        Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
    CHECK(std::abs(grid.sample(0.5 * dir)) <= 0.5 * cell);
  }
}

TEST_CASE("sdf gradient: radial on a sphere grid") {
  const SdfGrid grid = sphere_grid(128);
  Pcg32 rng(3);
  for (int i = 0; i < 50; ++i) {
    const Vec3 dir =
        Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
    const Vec3 x = rng.uniform(0.3, 0.7) * dir;
    const Vec3 g = grid.gradient(x).normalized();
    CHECK((g - dir).norm() <= 0.05);
  }
}

TEST_CASE("sdf gradient matches central differences on a random grid") {
  SdfGrid grid = sphere_grid(16);
  Pcg32 rng(4);
  for (double& v : grid.values) v += rng.uniform(-0.05, 0.05);
  const double h = 0.25 * grid.cell_size().x();
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    // Stay inside one cell per axis probe: central differences across cell
    // boundaries would mix the piecewise-constant axis derivative.
    Vec3 x(rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9));
    const Vec3 cell = (x - grid.bounds_min).cwiseQuotient(grid.cell_size());
    bool safe = true;
    for (int a = 0; a < 3; ++a) {
      const double frac = cell[a] - std::floor(cell[a]);
      if (frac < 0.3 || frac > 0.7) safe = false;
    }
    if (!safe) continue;
    const Vec3 g = grid.gradient(x);
    for (int a = 0; a < 3; ++a) {
      Vec3 xp = x, xm = x;
      xp[a] += h;
      xm[a] -= h;
      const double fd = (grid.sample(xp) - grid.sample(xm)) / (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(g[a]), 1e-3});
      worst = std::max(worst, std::abs(fd - g[a]) / denom);
    }
  }
  CHECK(worst <= 1e-2);
}

TEST_CASE("sdf outside the bounds: clamped plus distance to box") {
  const SdfGrid grid = sphere_grid();
  const Vec3 x(0.0, 0.0, 3.0);
  const double at_face = grid.sample(Vec3(0.0, 0.0, 1.0));
  CHECK(grid.sample(x) == doctest::Approx(at_face + 2.0));
  CHECK((grid.gradient(x) - Vec3::UnitZ()).norm() < 1e-12);
}

TEST_CASE("neus alpha: hand-evaluated sigmoid ratio") {
  // (sigmoid(1) - sigmoid(-1)) / sigmoid(1) = (0.731 - 0.269) / 0.731.
  CHECK(neus_alpha(0.1, -0.1, 10.0) == doctest::Approx(0.632).epsilon(2e-3));
  CHECK(neus_alpha(0.1, 0.1, 10.0) == 0.0);
  CHECK(neus_alpha(0.1, 0.3, 10.0) == 0.0);  // increasing SDF: clamped
}

TEST_CASE("neus alpha: range and monotonicity in s") {
  Pcg32 rng(5);
  for (int i = 0; i < 200; ++i) {
    const double f_i = rng.uniform(-0.5, 0.5);
    const double f_next = rng.uniform(-0.5, 0.5);
    const double s = rng.uniform(0.1, 100.0);
    const double a = neus_alpha(f_i, f_next, s);
    CHECK(a >= 0.0);
    CHECK(a < 1.0);
  }
  // Monotone in s for a fixed decreasing pair.
  double prev = 0.0;
  for (double s = 1.0; s < 200.0; s *= 1.7) {
    const double a = neus_alpha(0.05, -0.02, s);
    CHECK(a >= prev - 1e-12);
    prev = a;
  }
}

TEST_CASE("neus alpha gradients match finite differences") {
  Pcg32 rng(6);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double f_i = rng.uniform(-0.3, 0.3);
    const double f_next = rng.uniform(-0.3, 0.3);
    const double s = rng.uniform(0.5, 50.0);
    NeusAlphaGrads g;
    neus_alpha_with_grads(f_i, f_next, s, g);
    if (sigmoid(s * f_next) >= sigmoid(s * f_i) - 1e-4) continue;  // near the clamp
    const double h = 1e-6;
    const double d_fi = (neus_alpha(f_i + h, f_next, s) - neus_alpha(f_i - h, f_next, s)) / (2 * h);
    const double d_fn = (neus_alpha(f_i, f_next + h, s) - neus_alpha(f_i, f_next - h, s)) / (2 * h);
    const double d_s = (neus_alpha(f_i, f_next, s + h) - neus_alpha(f_i, f_next, s - h)) / (2 * h);
    worst = std::max(worst, std::abs(d_fi - g.d_f_i) / std::max(1.0, std::abs(d_fi)));
    worst = std::max(worst, std::abs(d_fn - g.d_f_next) / std::max(1.0, std::abs(d_fn)));
    worst = std::max(worst, std::abs(d_s - g.d_s) / std::max(1.0, std::abs(d_s)));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("volume render: ray missing all geometry is empty") {
  const SdfGrid grid = sphere_grid();
  Ray ray;
  ray.origin = Vec3(0.9, 0.9, -3.0);  // passes the corner, far from the sphere
  ray.dir = Vec3::UnitZ();
  const RaySampleBatch batch = single_ray_batch(grid, ray, 64);
  const auto result = volume_render(grid, batch);
  CHECK(result.opacity[0] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(result.color[0].norm() <= 1e-6);
}

TEST_CASE("volume render: constant-color sphere renders its color") {
  SdfGrid grid = sphere_grid(48);
  const Vec3 color(0.8, 0.3, 0.1);
  grid.diffuse.assign(grid.vertex_count(), color);
  grid.tint.assign(grid.vertex_count(), 0.0);
  grid.log_deviation = std::log(200.0);  // sharp surface

  Pcg32 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    Ray ray;
    ray.origin = Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), -2.5);
    ray.dir = Vec3::UnitZ();
    const RaySampleBatch batch = single_ray_batch(grid, ray, 256);
    const auto result = volume_render(grid, batch);
    CHECK(result.opacity[0] >= 0.95);
    // Composited color approaches opacity * c_d; normalize out the coverage.
    const Vec3 normalized = result.color[0] / result.opacity[0];
    CHECK((normalized - color).norm() <= 0.02 * color.norm() + 0.01);
  }
}

TEST_CASE("volume render: silhouette-interior normals are radial") {
  SdfGrid grid = sphere_grid(48);
  grid.log_deviation = std::log(200.0);
  Pcg32 rng(8);
  for (int trial = 0; trial < 8; ++trial) {
    Ray ray;
    ray.origin = Vec3(rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25), -2.5);
    ray.dir = Vec3::UnitZ();
    const RaySampleBatch batch = single_ray_batch(grid, ray, 256);
    const auto result = volume_render(grid, batch);
    REQUIRE(result.opacity[0] > 0.9);
    // Analytic sphere normal at the first intersection of the ray.
    const double b = ray.origin.dot(ray.dir);
    const double c = ray.origin.squaredNorm() - 0.25;
    const double t_hit = -b - std::sqrt(b * b - c);
    const Vec3 expected = (ray.origin + t_hit * ray.dir).normalized();
    const double angle = std::acos(clamped(result.normal[0].dot(expected), -1.0, 1.0));
    CHECK(angle <= 5.0 * kPi / 180.0);
  }
}

TEST_CASE("volume-rendered opacity stays in [0,1]") {
  SdfGrid grid = sphere_grid(16);
  Pcg32 rng(9);
  for (double& v : grid.values) v += rng.uniform(-0.2, 0.2);
  std::vector<Ray> rays;
  for (int i = 0; i < 32; ++i) {
    Ray ray;
    ray.origin = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), -2.5);
    ray.dir = Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 1.0).normalized();
    rays.push_back(ray);
  }
  const RaySampleBatch batch = make_ray_batch(grid, rays, 48, 16, rng);
  const auto result = volume_render(grid, batch);
  for (const double op : result.opacity) {
    CHECK(op >= 0.0);
    CHECK(op <= 1.0 + 1e-9);
  }
}

TEST_CASE("nerf loss: both terms vanish for an exact fit") {
  SdfGrid grid = sphere_grid(128);
  grid.diffuse.assign(grid.vertex_count(), Vec3(0.5, 0.5, 0.5));
  Pcg32 rng(10);
  std::vector<Ray> rays;
  for (int i = 0; i < 4; ++i) {
    Ray ray;
    // Impact parameter bounded away from the SDF's singular center.
    const double angle = rng.uniform(0.0, 2.0 * kPi);
    const double radius = rng.uniform(0.3, 0.4);
    ray.origin = Vec3(radius * std::cos(angle), radius * std::sin(angle), -2.5);
    ray.dir = Vec3::UnitZ();
    rays.push_back(ray);
  }
  const RaySampleBatch batch = make_ray_batch(grid, rays, 16, 0, rng);
  const auto result = volume_render(grid, batch);
  const double loss = nerf_loss(result.color, result.color, grid, batch, 0.1);
  CHECK(loss <= 1e-3);
}

TEST_CASE("nerf loss: eikonal term counts (|grad|-1)^2 per sample") {
  // Doubling the field doubles the gradient: (2-1)^2 = 1 per sample.
  SdfGrid grid = sphere_grid(64);
  for (double& v : grid.values) v *= 2.0;
  Pcg32 rng(11);
  std::vector<Ray> rays(4);
  for (auto& ray : rays) {
    ray.origin = Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), -2.5);
    ray.dir = Vec3::UnitZ();
  }
  const RaySampleBatch batch = make_ray_batch(grid, rays, 32, 0, rng);
  const double expected = static_cast<double>(batch.ray_count()) * batch.samples_per_ray;
  CHECK(eikonal_term(grid, batch) == doctest::Approx(expected).epsilon(0.02));

  const auto result = volume_render(grid, batch);
  const double loss = nerf_loss(result.color, result.color, grid, batch, 0.1);
  CHECK(loss == doctest::Approx(0.1 * expected).epsilon(0.02));
}

TEST_CASE("nerf loss: color term is the mean abs difference over rays") {
  const SdfGrid grid = sphere_grid(8);
  Pcg32 rng(12);
  std::vector<Ray> rays(3);
  for (auto& ray : rays) {
    ray.origin = Vec3(0, 0, -2.5);
    ray.dir = Vec3::UnitZ();
  }
  const RaySampleBatch batch = make_ray_batch(grid, rays, 8, 0, rng);
  std::vector<Vec3> rendered = {Vec3(0.5, 0.5, 0.5), Vec3(1, 0, 0), Vec3(0, 0, 0)};
  std::vector<Vec3> target = {Vec3(0.5, 0.5, 0.5), Vec3(0, 0, 0), Vec3(0, 1, 1)};
  const double expected_color = (0.0 + 1.0 + 2.0) / 9.0;
  const double loss = nerf_loss(rendered, target, grid, batch, 0.0);
  CHECK(loss == doctest::Approx(expected_color).epsilon(1e-12));
}

TEST_CASE("distillation loss: aligned, opposed, orthogonal") {
  std::vector<Vec3> a, b;
  for (int i = 0; i < 10; ++i) {
    a.push_back(Vec3::UnitZ());
    b.push_back(Vec3::UnitZ());
  }
  CHECK(distillation_loss(a, b) == doctest::Approx(0.0));
  for (auto& n : b) n = -Vec3::UnitZ();
  CHECK(distillation_loss(a, b) == doctest::Approx(20.0));
  for (auto& n : b) n = Vec3::UnitX();
  CHECK(distillation_loss(a, b) == doctest::Approx(10.0));
  // Symmetry.
  Pcg32 rng(13);
  std::vector<Vec3> c, d;
  for (int i = 0; i < 20; ++i) {
    c.push_back(Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized());
    d.push_back(Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized());
  }
  CHECK(distillation_loss(c, d) == doctest::Approx(distillation_loss(d, c)));
  CHECK_THROWS_AS(distillation_loss(a, c), ConsistencyError);
}

TEST_CASE("volume render backward matches finite differences") {
  SdfGrid grid = sphere_grid(12);
  Pcg32 rng(14);
  for (double& v : grid.values) v += rng.uniform(-0.03, 0.03);
  for (Vec3& c : grid.diffuse)
    c = Vec3(rng.next_double(), rng.next_double(), rng.next_double());
  for (double& p : grid.tint) p = rng.next_double();
  for (Vec3& c : grid.view_sh) c = 0.1 * Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));

  std::vector<Ray> rays(6);
  for (auto& ray : rays) {
    ray.origin = Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), -2.5);
    ray.dir = Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 1.0).normalized();
  }
  const RaySampleBatch batch = make_ray_batch(grid, rays, 24, 0, rng);

  std::vector<Vec3> w_color(rays.size()), w_normal(rays.size());
  std::vector<double> w_opacity(rays.size());
  for (size_t r = 0; r < rays.size(); ++r) {
    w_color[r] = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    w_normal[r] = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    w_opacity[r] = rng.uniform(-1, 1);
  }
  const auto loss = [&]() {
    const auto res = volume_render(grid, batch);
    double total = 0.0;
    for (size_t r = 0; r < rays.size(); ++r) {
      total += w_color[r].dot(res.color[r]);
      total += w_normal[r].dot(res.normal_raw[r]);
      total += w_opacity[r] * res.opacity[r];
    }
    return total;
  };

  GridGrads grads(grid);
  volume_render_backward(grid, batch, w_color, w_normal, w_opacity, grads);

  double worst = 0.0;
  int checked = 0;
  const double h = 1e-5;
  auto fd_check = [&](double* p, double analytic) {
    const double saved = *p;
    *p = saved + h;
    const double up = loss();
    *p = saved - h;
    const double down = loss();
    *p = saved;
    const double fd = (up - down) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-3});
    worst = std::max(worst, std::abs(fd - analytic) / denom);
    ++checked;
  };

  // Probe a scattering of parameters of every group.
  for (int probe = 0; probe < 40; ++probe) {
    const size_t v = rng.next_below(static_cast<uint32_t>(grid.vertex_count()));
    fd_check(&grid.values[v], grads.d_values[v]);
    fd_check(&grid.diffuse[v][probe % 3], grads.d_diffuse[v][probe % 3]);
    fd_check(&grid.tint[v], grads.d_tint[v]);
  }
  for (int b = 0; b < 9; ++b) fd_check(&grid.view_sh[b][b % 3], grads.d_view_sh[b][b % 3]);
  fd_check(&grid.log_deviation, grads.d_log_deviation);
  CHECK(checked > 100);
  CHECK(worst <= 2e-3);
}

TEST_CASE("eikonal backward matches finite differences") {
  SdfGrid grid = sphere_grid(10);
  Pcg32 rng(15);
  for (double& v : grid.values) v += rng.uniform(-0.05, 0.05);
  std::vector<Ray> rays(4);
  for (auto& ray : rays) {
    ray.origin = Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), -2.5);
    ray.dir = Vec3::UnitZ();
  }
  const RaySampleBatch batch = make_ray_batch(grid, rays, 16, 0, rng);
  std::vector<double> d_values(grid.vertex_count(), 0.0);
  eikonal_backward(grid, batch, 1.0, d_values);
  const double h = 1e-6;
  double worst = 0.0;
  for (int probe = 0; probe < 60; ++probe) {
    const size_t v = rng.next_below(static_cast<uint32_t>(grid.vertex_count()));
    const double saved = grid.values[v];
    grid.values[v] = saved + h;
    const double up = eikonal_term(grid, batch);
    grid.values[v] = saved - h;
    const double down = eikonal_term(grid, batch);
    grid.values[v] = saved;
    const double fd = (up - down) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(d_values[v]), 1e-3});
    worst = std::max(worst, std::abs(fd - d_values[v]) / denom);
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("extract_mesh: sphere level set with watertight topology") {
  const SdfGrid grid = sphere_grid(40, 0.5);
  const TriangleMesh mesh = extract_mesh(grid);
  REQUIRE(!mesh.empty());
  const double cell = grid.cell_size().x();
  for (const Vec3& v : mesh.vertices)
    CHECK(std::abs(v.norm() - 0.5) <= cell);
  // Surface area vs 4 pi r^2.
  CHECK(mesh.surface_area() == doctest::Approx(4.0 * kPi * 0.25).epsilon(0.05));
  // Watertight: every edge is shared by exactly two triangles.
  std::map<std::pair<int, int>, int> edge_use;
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) {
      const int a = t[e], b = t[(e + 1) % 3];
      edge_use[{std::min(a, b), std::max(a, b)}] += 1;
    }
  for (const auto& [edge, uses] : edge_use) CHECK(uses == 2);
  // Vertex normals roughly radial.
  for (size_t i = 0; i < mesh.vertices.size(); i += 17)
    CHECK(mesh.normals[i].dot(mesh.vertices[i].normalized()) > 0.9);
}

TEST_CASE("extract_mesh: all-positive grid raises the empty-mesh error") {
  SdfGrid grid = sphere_grid(8);
  for (double& v : grid.values) v = std::abs(v) + 0.1;
  CHECK_THROWS_AS(extract_mesh(grid), EmptyMeshError);
}

TEST_CASE("extract_mesh is scale equivariant") {
  SdfGrid grid = sphere_grid(16, 0.5);
  SdfGrid scaled = grid;
  scaled.bounds_min *= 3.0;
  scaled.bounds_max *= 3.0;
  const TriangleMesh a = extract_mesh(grid);
  const TriangleMesh b = extract_mesh(scaled);
  REQUIRE(a.vertices.size() == b.vertices.size());
  for (size_t i = 0; i < a.vertices.size(); ++i)
    CHECK((3.0 * a.vertices[i] - b.vertices[i]).norm() <= 1e-12);
}

TEST_CASE("grid checkpoint round-trips") {
  SdfGrid grid = sphere_grid(6);
  Pcg32 rng(16);
  for (double& v : grid.values) v += rng.uniform(-0.1, 0.1);
  for (Vec3& c : grid.diffuse) c = Vec3(rng.next_double(), rng.next_double(), rng.next_double());
  for (double& p : grid.tint) p = rng.next_double();
  grid.view_sh[3] = Vec3(0.1, -0.2, 0.3);
  const auto dir = std::filesystem::temp_directory_path() / "dgs_grid_io";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "t.grid").string();
  save_grid(grid, path);
  const SdfGrid back = load_grid(path);
  CHECK(back.cells == grid.cells);
  CHECK(back.values == grid.values);
  CHECK(back.tint == grid.tint);
  CHECK(back.log_deviation == grid.log_deviation);
  for (size_t i = 0; i < grid.diffuse.size(); ++i) CHECK(back.diffuse[i] == grid.diffuse[i]);
  for (int b = 0; b < 9; ++b) CHECK(back.view_sh[b] == grid.view_sh[b]);
}

TEST_CASE("eikonal of an exact sphere grid is tiny per sample") {
  const SdfGrid grid = sphere_grid(128);
  Pcg32 rng(17);
  std::vector<Ray> rays(8);
  for (auto& ray : rays) {
    ray.origin = Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), -2.5);
    ray.dir = Vec3::UnitZ();
  }
  const RaySampleBatch batch = make_ray_batch(grid, rays, 64, 0, rng);
  const double per_sample =
      eikonal_term(grid, batch) / (batch.ray_count() * batch.samples_per_ray);
  CHECK(per_sample <= 1e-3);
}
