// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dgs/edit/arap.hpp"
#include "dgs/edit/binding.hpp"
#include "dgs/edit/relight.hpp"
#include "dgs/edit/texture_edit.hpp"
#include "dgs/sdf/marching_cubes.hpp"
#include "test_utils.hpp"

using namespace dgs;

namespace {

TriangleMesh sphere_mesh(int cells = 24, double radius = 0.5) {
  return extract_mesh(SdfGrid::make_sphere(Eigen::Vector3i::Constant(cells),
                                           Vec3::Constant(-1), Vec3::Constant(1), radius));
}

// Open cylinder along z, radius r, height h; rings x segments quads.
TriangleMesh cylinder_mesh(int rings = 12, int segments = 16, double radius = 0.25,
                           double height = 1.0) {
  TriangleMesh mesh;
  for (int ring = 0; ring <= rings; ++ring) {
    const double z = height * (static_cast<double>(ring) / rings - 0.5);
    for (int seg = 0; seg < segments; ++seg) {
      const double a = 2.0 * kPi * seg / segments;
      mesh.vertices.push_back(Vec3(radius * std::cos(a), radius * std::sin(a), z));
    }
  }
  const auto vid = [&](int ring, int seg) { return ring * segments + (seg % segments); };
  for (int ring = 0; ring < rings; ++ring)
    for (int seg = 0; seg < segments; ++seg) {
      mesh.triangles.push_back({vid(ring, seg), vid(ring, seg + 1), vid(ring + 1, seg)});
      mesh.triangles.push_back({vid(ring, seg + 1), vid(ring + 1, seg + 1), vid(ring + 1, seg)});
    }
  return mesh;
}

GaussianCloud cloud_near_mesh(const TriangleMesh& mesh, int count, Pcg32& rng) {
  GaussianCloud cloud;
  for (int i = 0; i < count; ++i) {
    Gaussian g;
    const auto& tri = mesh.triangles[rng.next_below(static_cast<uint32_t>(mesh.triangle_count()))];
    double b0 = rng.next_double(), b1 = rng.next_double();
    if (b0 + b1 > 1) {
      b0 = 1 - b0;
      b1 = 1 - b1;
    }
    g.position = mesh.vertices[tri[0]] + b0 * (mesh.vertices[tri[1]] - mesh.vertices[tri[0]]) +
                 b1 * (mesh.vertices[tri[2]] - mesh.vertices[tri[0]]) +
                 Vec3(rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02),
                      rng.uniform(-0.02, 0.02));
    g.normal = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
    g.log_scale = Vec3::Constant(-3.0);
    g.opacity_logit = 2.0;
    cloud.gaussians.push_back(g);
  }
  return cloud;
}

}  // namespace

TEST_CASE("closest point on triangle: faces, edges, corners") {
  const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
  // Interior projection.
  auto cp = closest_point_on_triangle(Vec3(0.25, 0.25, 1.0), a, b, c);
  CHECK((cp.point - Vec3(0.25, 0.25, 0)).norm() < 1e-12);
  CHECK(cp.barycentric.x() == doctest::Approx(0.5));
  // Corner region.
  cp = closest_point_on_triangle(Vec3(-1, -1, 0), a, b, c);
  CHECK((cp.point - a).norm() < 1e-12);
  CHECK((cp.barycentric - Vec3(1, 0, 0)).norm() < 1e-12);
  // Edge region.
  cp = closest_point_on_triangle(Vec3(0.5, -2, 0), a, b, c);
  CHECK((cp.point - Vec3(0.5, 0, 0)).norm() < 1e-12);
}

TEST_CASE("binding matches brute force over all triangles") {
  Pcg32 rng(31);
  const TriangleMesh mesh = sphere_mesh(16);
  GaussianCloud cloud = testutil::random_cloud(40, rng, 0.8, 0.0);
  const GaussianBinding binding = bind_gaussians(cloud, mesh);

  for (size_t i = 0; i < cloud.count(); ++i) {
    double best = 1e300;
    for (const auto& tri : mesh.triangles) {
      const auto cp = closest_point_on_triangle(cloud[i].position, mesh.vertices[tri[0]],
                                                mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
      best = std::min(best, cp.sq_distance);
    }
    const auto& tri = mesh.triangles[binding.triangle[i]];
    const Vec3 bound = binding.barycentric[i][0] * mesh.vertices[tri[0]] +
                       binding.barycentric[i][1] * mesh.vertices[tri[1]] +
                       binding.barycentric[i][2] * mesh.vertices[tri[2]];
    CHECK((cloud[i].position - bound).squaredNorm() == doctest::Approx(best).epsilon(1e-9));
    CHECK(binding.barycentric[i].sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(binding.barycentric[i].minCoeff() >= -1e-12);
  }
}

TEST_CASE("binding: coincident and centroid queries") {
  TriangleMesh mesh;
  mesh.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  mesh.triangles = {{0, 1, 2}};
  GaussianCloud cloud;
  Gaussian g;
  g.position = Vec3(0, 0, 0);
  cloud.gaussians.push_back(g);
  g.position = Vec3(1.0 / 3, 1.0 / 3, 0);
  cloud.gaussians.push_back(g);
  const GaussianBinding binding = bind_gaussians(cloud, mesh);
  CHECK((binding.barycentric[0] - Vec3(1, 0, 0)).norm() < 1e-12);
  CHECK((binding.barycentric[1] - Vec3(1.0 / 3, 1.0 / 3, 1.0 / 3)).norm() < 1e-6);
}

TEST_CASE("arap: identity handles leave the mesh bit-unchanged") {
  const TriangleMesh mesh = cylinder_mesh();
  DeformationHandleSet handles;
  for (int k = 0; k < 16; ++k) {
    handles.handles.push_back(k);  // bottom ring pinned at current positions
    handles.handle_targets.push_back(mesh.vertices[k]);
  }
  const ArapResult result = arap_deform(mesh, handles, 5);
  REQUIRE(result.mesh.vertex_count() == mesh.vertex_count());
  for (size_t v = 0; v < mesh.vertex_count(); ++v) {
    CHECK(result.mesh.vertices[v] == mesh.vertices[v]);  // bitwise
    CHECK(result.rotations[v] == Mat3::Identity());
    CHECK(result.translations[v] == Vec3::Zero());
  }
}

TEST_CASE("arap: rigid translation of all handles moves the mesh rigidly") {
  const TriangleMesh mesh = cylinder_mesh();
  const Vec3 shift(0.3, -0.2, 0.5);
  DeformationHandleSet handles;
  // A spread of handle vertices, fixed set empty.
  for (size_t v = 0; v < mesh.vertex_count(); v += 7) {
    handles.handles.push_back(static_cast<int>(v));
    handles.handle_targets.push_back(mesh.vertices[v] + shift);
  }
  const ArapResult result = arap_deform(mesh, handles, 10);
  for (size_t v = 0; v < mesh.vertex_count(); ++v) {
    CHECK((result.mesh.vertices[v] - (mesh.vertices[v] + shift)).norm() <= 1e-8);
    CHECK((result.rotations[v] - Mat3::Identity()).norm() <= 1e-4);
  }
}

TEST_CASE("arap: bending a cylinder decreases energy across iterations") {
  const TriangleMesh mesh = cylinder_mesh(16, 16, 0.2, 1.2);
  DeformationHandleSet handles;
  // Pin the bottom ring, rotate the top ring by 30 degrees about x through
  // the cylinder center.
  const Mat3 bend = Eigen::AngleAxisd(kPi / 6.0, Vec3::UnitX()).toRotationMatrix();
  const int segments = 16;
  for (int seg = 0; seg < segments; ++seg) handles.fixed.push_back(seg);
  for (size_t v = mesh.vertex_count() - segments; v < mesh.vertex_count(); ++v) {
    handles.handles.push_back(static_cast<int>(v));
    handles.handle_targets.push_back(bend * mesh.vertices[v]);
  }
  const ArapResult result = arap_deform(mesh, handles, 20);
  REQUIRE(result.energy.size() == 20);
  CHECK(result.energy[19] <= result.energy[4] + 1e-9);
  for (size_t i = 1; i < result.energy.size(); ++i)
    CHECK(result.energy[i] <= result.energy[i - 1] + 1e-9);
  // Handles are hard constraints.
  for (size_t h = 0; h < handles.handles.size(); ++h)
    CHECK((result.mesh.vertices[handles.handles[h]] - handles.handle_targets[h]).norm() == 0.0);
}

TEST_CASE("apply_deformation: identity is bit-exact") {
  Pcg32 rng(32);
  const TriangleMesh mesh = sphere_mesh(12);
  const GaussianCloud cloud = cloud_near_mesh(mesh, 30, rng);
  const GaussianBinding binding = bind_gaussians(cloud, mesh);
  const std::vector<Mat3> rotations(mesh.vertex_count(), Mat3::Identity());
  const std::vector<Vec3> translations(mesh.vertex_count(), Vec3::Zero());
  const GaussianCloud out = apply_deformation(cloud, binding, mesh, rotations, translations);
  for (size_t i = 0; i < cloud.count(); ++i) {
    CHECK(out[i].position == cloud[i].position);
    CHECK(out[i].rotation.coeffs() == cloud[i].rotation.coeffs());
    CHECK(out[i].normal == cloud[i].normal);
    CHECK(out[i].log_scale == cloud[i].log_scale);
  }
}

TEST_CASE("apply_deformation: global rigid motion transforms exactly") {
  Pcg32 rng(33);
  const TriangleMesh mesh = sphere_mesh(12);
  const GaussianCloud cloud = cloud_near_mesh(mesh, 25, rng);
  const GaussianBinding binding = bind_gaussians(cloud, mesh);

  const Mat3 rot = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  const Vec3 shift(0.2, -0.1, 0.4);
  std::vector<Mat3> rotations(mesh.vertex_count(), rot);
  std::vector<Vec3> translations(mesh.vertex_count());
  for (size_t v = 0; v < mesh.vertex_count(); ++v)
    translations[v] = rot * mesh.vertices[v] + shift - mesh.vertices[v];

  const GaussianCloud out = apply_deformation(cloud, binding, mesh, rotations, translations);
  for (size_t i = 0; i < cloud.count(); ++i) {
    CHECK((out[i].position - (rot * cloud[i].position + shift)).norm() <= 1e-9);
    CHECK((out[i].normal - rot * cloud[i].normal).norm() <= 1e-9);
    // Covariance conjugation: sigma' = R sigma R^T, checked directly.
    const Mat3 expected = rot * covariance_of(cloud[i]) * rot.transpose();
    CHECK((covariance_of(out[i]) - expected).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("apply_deformation commutes for composed rigid motions") {
  Pcg32 rng(34);
  const TriangleMesh mesh = sphere_mesh(10);
  const GaussianCloud cloud = cloud_near_mesh(mesh, 15, rng);
  const GaussianBinding binding = bind_gaussians(cloud, mesh);

  const Mat3 r1 = Eigen::AngleAxisd(0.4, Vec3::UnitY()).toRotationMatrix();
  const Mat3 r2 = Eigen::AngleAxisd(-0.6, Vec3(1, 1, 0).normalized()).toRotationMatrix();
  const auto rigid = [&](const Mat3& r) {
    std::vector<Mat3> rotations(mesh.vertex_count(), r);
    std::vector<Vec3> translations(mesh.vertex_count());
    for (size_t v = 0; v < mesh.vertex_count(); ++v)
      translations[v] = r * mesh.vertices[v] - mesh.vertices[v];
    return std::pair{rotations, translations};
  };

  // Deform by r1, rebind on the deformed mesh, deform by r2.
  auto [rot1, t1] = rigid(r1);
  const GaussianCloud step1 = apply_deformation(cloud, binding, mesh, rot1, t1);
  TriangleMesh mesh1 = mesh;
  for (Vec3& v : mesh1.vertices) v = r1 * v;
  const GaussianBinding binding1 = bind_gaussians(step1, mesh1);
  std::vector<Mat3> rot2(mesh1.vertex_count(), r2);
  std::vector<Vec3> t2(mesh1.vertex_count());
  for (size_t v = 0; v < mesh1.vertex_count(); ++v)
    t2[v] = r2 * mesh1.vertices[v] - mesh1.vertices[v];
  const GaussianCloud two_steps = apply_deformation(step1, binding1, mesh1, rot2, t2);

  // Single combined motion r2 r1.
  auto [rot12, t12] = rigid(Mat3(r2 * r1));
  const GaussianCloud combined = apply_deformation(cloud, binding, mesh, rot12, t12);

  for (size_t i = 0; i < cloud.count(); ++i) {
    CHECK((two_steps[i].position - combined[i].position).norm() <= 1e-6);
    CHECK((two_steps[i].normal - combined[i].normal).norm() <= 1e-6);
    CHECK((covariance_of(two_steps[i]) - covariance_of(combined[i])).cwiseAbs().maxCoeff() <=
          1e-6);
  }
}

TEST_CASE("deformed covariances stay symmetric positive semi-definite") {
  Pcg32 rng(35);
  const TriangleMesh mesh = sphere_mesh(10);
  GaussianCloud cloud = cloud_near_mesh(mesh, 20, rng);
  const GaussianBinding binding = bind_gaussians(cloud, mesh);
  // A non-rigid per-vertex field (random rotations/translations).
  std::vector<Mat3> rotations(mesh.vertex_count());
  std::vector<Vec3> translations(mesh.vertex_count());
  for (size_t v = 0; v < mesh.vertex_count(); ++v) {
    rotations[v] = Eigen::AngleAxisd(rng.uniform(0, kPi),
                                     Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1),
                                          rng.uniform(-1, 1)).normalized())
                       .toRotationMatrix();
    translations[v] = Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
  }
  const GaussianCloud out = apply_deformation(cloud, binding, mesh, rotations, translations);
  for (size_t i = 0; i < out.count(); ++i) {
    const Mat3 cov = covariance_of(out[i]);
    CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-12);
  }
}

TEST_CASE("relight: identity swap is bit-equal, scaling is exact") {
  Pcg32 rng(36);
  GaussianCloud cloud = testutil::random_cloud(30, rng);
  const CubeMap env(8, Vec3(0.8, 0.6, 0.4));
  Camera cam = testutil::test_camera(24, 24);

  RenderQuality quality;
  quality.precompute.irradiance_res = 8;
  quality.precompute.prefilter_samples = 64;

  EnvironmentLight light(env);
  const RenderOutput base = render_scene(cloud, light, cam, quality);
  const RenderOutput same = relight(cloud, light, env, cam, quality);
  CHECK(max_abs_diff(base.image, same.image) == 0.0);
  CHECK(max_abs_diff(base.gbuffer.alpha_map, same.gbuffer.alpha_map) == 0.0);
  CHECK(max_abs_diff(base.gbuffer.normal_map, same.gbuffer.normal_map) == 0.0);

  CubeMap doubled = env;
  for (Vec3& t : doubled.texels()) t *= 2.0;
  const RenderOutput twice = relight(cloud, light, doubled, cam, quality);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x)
      for (int c = 0; c < 3; ++c)
        CHECK(twice.image.at(x, y, c) ==
              doctest::Approx(2.0 * base.image.at(x, y, c)).epsilon(1e-9));
}

TEST_CASE("select_editable_gaussians: mask and depth rules") {
  Camera cam = testutil::test_camera(16, 16, 24.0);
  GaussianCloud cloud;
  Gaussian front;
  front.position = Vec3(0, 0, 3.0);
  front.opacity_logit = 3.0;
  front.log_scale = Vec3::Constant(-2.0);
  Gaussian back = front;
  back.position = Vec3(0, 0, 5.0);
  cloud.gaussians.push_back(front);
  cloud.gaussians.push_back(back);

  const auto projected = project(cloud, cam);
  const auto depth = composite(
      projected, cloud, 1,
      [](const Gaussian&, const ProjectedGaussian& pg, double* out) { out[0] = pg.depth; },
      cam);

  Image empty_mask(16, 16, 1, 0.0);
  CHECK(select_editable_gaussians(cloud, cam, empty_mask, depth.attribute, 0.1).empty());

  Image full_mask(16, 16, 1, 1.0);
  // Small tolerance: only the front splat agrees with the blended depth.
  const auto front_only = select_editable_gaussians(cloud, cam, full_mask, depth.attribute, 0.2);
  CHECK(front_only == std::vector<int>{0});
  // Infinite tolerance: everything in the mask.
  const auto both = select_editable_gaussians(cloud, cam, full_mask, depth.attribute, 1e18);
  CHECK(both == std::vector<int>{0, 1});
}

TEST_CASE("texture edit: identical target is a fixed point") {
  Pcg32 rng(37);
  const TriangleMesh mesh = sphere_mesh(20);
  GaussianCloud cloud = cloud_near_mesh(mesh, 200, rng);
  for (Gaussian& g : cloud.gaussians) {
    g.diffuse_albedo = Vec3(0.4, 0.5, 0.6);
    g.log_scale = Vec3::Constant(-2.6);
    g.opacity_logit = 4.0;
  }
  TextureEdit edit;
  edit.viewpoint = Camera::look_at(Vec3(0, 0, -2.2), Vec3::Zero(), Vec3::UnitY(), 60.0, 48, 48);
  edit.attribute = TextureEdit::Attribute::kDiffuse;
  edit.random_views = 3;
  const auto projected = project(cloud, edit.viewpoint);
  const auto current = composite(
      projected, cloud, 3,
      [](const Gaussian& g, const ProjectedGaussian&, double* out) {
        out[0] = g.diffuse_albedo.x();
        out[1] = g.diffuse_albedo.y();
        out[2] = g.diffuse_albedo.z();
      },
      edit.viewpoint);
  edit.edited = current.attribute;  // paint nothing new
  edit.mask = Image(48, 48, 1, 0.0);
  for (int y = 20; y < 28; ++y)
    for (int x = 20; x < 28; ++x) edit.mask.at(x, y) = 1.0;

  EditOptimizeOptions opts;
  opts.iterations = 10;
  opts.input_view_only = true;  // the direct form: target equals the render
  const EditResult result = optimize_texture_edit(cloud, edit, mesh, opts);
  REQUIRE(!result.selected.empty());
  CHECK(result.initial_loss == 0.0);
  for (size_t i = 0; i < cloud.count(); ++i)
    CHECK(result.cloud[i].diffuse_albedo == cloud[i].diffuse_albedo);
  // Geometry attributes are never touched.
  for (size_t i = 0; i < cloud.count(); ++i) {
    CHECK(result.cloud[i].position == cloud[i].position);
    CHECK(result.cloud[i].opacity_logit == cloud[i].opacity_logit);
    CHECK(result.cloud[i].normal == cloud[i].normal);
    CHECK(result.cloud[i].rotation.coeffs() == cloud[i].rotation.coeffs());
  }
}

TEST_CASE("texture edit: non-selected splats are bit-unchanged") {
  Pcg32 rng(38);
  const TriangleMesh mesh = sphere_mesh(16);
  GaussianCloud cloud = cloud_near_mesh(mesh, 150, rng);
  for (Gaussian& g : cloud.gaussians) {
    g.diffuse_albedo = Vec3(0.4, 0.4, 0.4);
    g.log_scale = Vec3::Constant(-2.6);
    g.opacity_logit = 4.0;
  }
  TextureEdit edit;
  edit.viewpoint = Camera::look_at(Vec3(0, 0, -2.2), Vec3::Zero(), Vec3::UnitY(), 60.0, 48, 48);
  edit.attribute = TextureEdit::Attribute::kDiffuse;
  edit.random_views = 2;
  edit.edited = Image(48, 48, 3, 0.9);  // paint bright
  edit.mask = Image(48, 48, 1, 0.0);
  for (int y = 18; y < 30; ++y)
    for (int x = 18; x < 30; ++x) edit.mask.at(x, y) = 1.0;

  EditOptimizeOptions opts;
  opts.iterations = 25;
  const EditResult result = optimize_texture_edit(cloud, edit, mesh, opts);
  REQUIRE(!result.selected.empty());
  CHECK(result.final_loss <= result.initial_loss);

  std::vector<uint8_t> selected(cloud.count(), 0);
  for (const int i : result.selected) selected[i] = 1;
  int changed = 0;
  for (size_t i = 0; i < cloud.count(); ++i) {
    if (selected[i]) {
      if ((result.cloud[i].diffuse_albedo - cloud[i].diffuse_albedo).norm() > 1e-6) ++changed;
    } else {
      CHECK(result.cloud[i].diffuse_albedo == cloud[i].diffuse_albedo);
    }
  }
  CHECK(changed > 0);
}
