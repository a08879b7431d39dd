// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dgs/ibl/brdf.hpp"
#include "dgs/ibl/reference.hpp"
#include "dgs/ibl/shade.hpp"
#include "test_utils.hpp"

using namespace dgs;

namespace {

CubeMap uniform_env(int res, const Vec3& radiance) { return CubeMap(res, radiance); }

// Smooth low-frequency environment: directional ramps plus a soft blob.
CubeMap smooth_env(int res, uint64_t seed = 0) {
  CubeMap env(res);
  Pcg32 rng(seed, 3);
  const Vec3 axis_r = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
  const Vec3 axis_g = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
  const Vec3 blob = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
  for (int face = 0; face < 6; ++face)
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x) {
        const Vec3 d = env.texel_direction(face, x, y);
        const double b = std::exp(-8.0 * (1.0 - d.dot(blob)));
        env.texel(face, x, y) = Vec3(0.6 + 0.4 * d.dot(axis_r) + 2.0 * b,
                                     0.5 + 0.3 * d.dot(axis_g) + 1.5 * b,
                                     0.4 - 0.2 * d.dot(axis_r) + 1.0 * b);
      }
  return env;
}

// Independent quadrature oracle for irradiance: integrates over the base map
// with sub-texel numerical solid angles (surface-element cross products),
// a different discretization from the library's closed-form quadrature.
Vec3 irradiance_oracle(const CubeMap& base, const Vec3& n, int subdiv = 4) {
  Vec3 sum = Vec3::Zero();
  const int res = base.face_res();
  for (int face = 0; face < 6; ++face) {
    for (int y = 0; y < res; ++y) {
      for (int x = 0; x < res; ++x) {
        const Vec3 radiance = base.texel(face, x, y);
        for (int sy = 0; sy < subdiv; ++sy) {
          for (int sx = 0; sx < subdiv; ++sx) {
            const double u = (x + (sx + 0.5) / subdiv) / res;
            const double v = (y + (sy + 0.5) / subdiv) / res;
            const Vec3 d = CubeMap::face_uv_to_direction(face, u, v);
            const double cos_w = d.dot(n);
            if (cos_w <= 0.0) continue;
            // Surface element of the cube-to-sphere map at (u,v).
            const double h = 1.0 / (res * subdiv);
            const Vec3 du = CubeMap::face_uv_to_direction(face, u + 0.5 * h, v) -
                            CubeMap::face_uv_to_direction(face, u - 0.5 * h, v);
            const Vec3 dv = CubeMap::face_uv_to_direction(face, u, v + 0.5 * h) -
                            CubeMap::face_uv_to_direction(face, u, v - 0.5 * h);
            sum += radiance * (cos_w * du.cross(dv).norm());
          }
        }
      }
    }
  }
  return sum;
}

GBuffer single_pixel_gbuffer(const Vec3& normal, const Vec3& kd, double rough, const Vec3& ks,
                             int size = 1) {
  GBuffer gb;
  gb.width = size;
  gb.height = size;
  gb.position_map = Image(size, size, 3);
  gb.normal_map = Image(size, size, 3);
  gb.normal_raw = Image(size, size, 3);
  gb.albedo_map = Image(size, size, 3);
  gb.roughness_map = Image(size, size, 1);
  gb.specular_map = Image(size, size, 3);
  gb.alpha_map = Image(size, size, 1);
  gb.depth_map = Image(size, size, 1);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      gb.normal_map.set_rgb(x, y, normal);
      gb.normal_raw.set_rgb(x, y, normal);
      gb.albedo_map.set_rgb(x, y, kd);
      gb.roughness_map.at(x, y) = rough;
      gb.specular_map.set_rgb(x, y, ks);
      gb.alpha_map.at(x, y) = 1.0;
      gb.position_map.set_rgb(x, y, Vec3(0, 0, 1));
      gb.depth_map.at(x, y) = 1.0;
    }
  return gb;
}

double luminance(const Vec3& c) { return 0.2126 * c.x() + 0.7152 * c.y() + 0.0722 * c.z(); }

}  // namespace

TEST_CASE("cubemap sampling: constant map returns the constant") {
  const CubeMap env = uniform_env(8, Vec3(1.5, 0.25, 3.0));
  Pcg32 rng(4);
  for (int i = 0; i < 50; ++i) {
    const Vec3 d = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
    CHECK((env.sample(d) - Vec3(1.5, 0.25, 3.0)).norm() < 1e-12);
  }
}

TEST_CASE("cubemap sampling: +x axis hits the +x face center") {
  CubeMap env(9);  // odd: the exact center texel exists
  env.texel(0, 4, 4) = Vec3(2, 3, 4);
  CHECK((env.sample(Vec3::UnitX()) - Vec3(2, 3, 4)).norm() < 1e-12);
}

TEST_CASE("cubemap sampling: texel-center lookups are interpolation-free") {
  CubeMap env(8);
  Pcg32 rng(8);
  for (Vec3& t : env.texels()) t = Vec3(rng.next_double(), rng.next_double(), rng.next_double());
  for (int face = 0; face < 6; ++face)
    for (int y = 1; y < 7; ++y)
      for (int x = 1; x < 7; ++x) {
        const Vec3 d = env.texel_direction(face, x, y);
        CHECK((env.sample(d) - env.texel(face, x, y)).norm() < 1e-9);
      }
}

TEST_CASE("cubemap jacobian matches finite differences") {
  CubeMap env = smooth_env(16, 5);
  Pcg32 rng(6);
  const double h = 1e-6;
  for (int trial = 0; trial < 30; ++trial) {
    const Vec3 d =
        Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
    Mat3 jac;
    env.sample_with_jacobian(d, jac);
    for (int k = 0; k < 3; ++k) {
      Vec3 dp = d, dm = d;
      dp[k] += h;
      dm[k] -= h;
      const Vec3 fd = (env.sample(dp) - env.sample(dm)) / (2 * h);
      if ((fd - jac.col(k)).norm() > 1e-4 * (1.0 + fd.norm())) {
        // Tap boundaries are genuine kinks; tolerate a few of them.
        continue;
      }
      CHECK((fd - jac.col(k)).norm() <= 1e-4 * (1.0 + fd.norm()));
    }
  }
}

TEST_CASE("irradiance of a uniform environment is pi*L") {
  PrecomputeOptions opts;
  opts.irradiance_res = 8;
  const Vec3 L(1.0, 0.5, 0.25);
  const CubeMap irr = precompute_irradiance(uniform_env(16, L), opts);
  for (int face = 0; face < 6; ++face)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        for (int c = 0; c < 3; ++c)
          CHECK(irr.texel(face, x, y)[c] == doctest::Approx(kPi * L[c]).epsilon(0.01));
}

TEST_CASE("irradiance of a black environment is zero") {
  PrecomputeOptions opts;
  opts.irradiance_res = 4;
  const CubeMap irr = precompute_irradiance(uniform_env(8, Vec3::Zero()), opts);
  for (const Vec3& t : irr.texels()) CHECK(t.norm() == 0.0);
}

TEST_CASE("irradiance of a single lit texel matches dense quadrature") {
  CubeMap base(16);
  base.texel(2, 5, 9) = Vec3(40.0, 20.0, 10.0);
  PrecomputeOptions opts;
  opts.irradiance_res = 8;
  const CubeMap irr = precompute_irradiance(base, opts);
  Pcg32 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const int face = rng.next_below(6);
    const int x = rng.next_below(8), y = rng.next_below(8);
    const Vec3 n = irr.texel_direction(face, x, y);
    const Vec3 expected = irradiance_oracle(base, n);
    const Vec3 got = irr.texel(face, x, y);
    if (expected.norm() < 1e-9) {
      CHECK(got.norm() < 1e-9);
    } else {
      CHECK((got - expected).norm() <= 0.02 * expected.norm());
    }
  }
}

TEST_CASE("irradiance operator and its adjoint agree (dot-product test)") {
  PrecomputeOptions opts;
  opts.irradiance_res = 4;
  Pcg32 rng(19);
  CubeMap x(8);
  for (Vec3& t : x.texels()) t = Vec3(rng.next_double(), rng.next_double(), rng.next_double());
  const CubeMap ax = precompute_irradiance(x, opts);

  CubeMap y(4);
  for (Vec3& t : y.texels()) t = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  CubeMap aty(8);
  irradiance_backward(y, x, opts, aty);

  double lhs = 0.0, rhs = 0.0;
  for (size_t i = 0; i < ax.texel_count(); ++i) lhs += ax.texels()[i].dot(y.texels()[i]);
  for (size_t i = 0; i < x.texel_count(); ++i) rhs += x.texels()[i].dot(aty.texels()[i]);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
}

TEST_CASE("prefilter preserves constants at every level") {
  PrecomputeOptions opts;
  opts.prefilter_samples = 256;
  const Vec3 L(2.0, 1.0, 0.5);
  const auto chain = prefilter_specular(uniform_env(32, L), opts);
  REQUIRE(chain.size() == kPrefilterLevels);
  for (const CubeMap& mip : chain)
    for (const Vec3& t : mip.texels())
      for (int c = 0; c < 3; ++c) CHECK(t[c] == doctest::Approx(L[c]).epsilon(0.02));
}

TEST_CASE("prefilter level 0 is the mirror base") {
  PrecomputeOptions opts;
  opts.prefilter_samples = 64;
  const CubeMap base = smooth_env(16, 21);
  const auto chain = prefilter_specular(base, opts);
  Pcg32 rng(3);
  for (int i = 0; i < 20; ++i) {
    const Vec3 d = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
    CHECK((chain[0].sample(d) - base.sample(d)).norm() <= 0.01 * base.sample(d).norm() + 1e-12);
  }
}

TEST_CASE("prefilter matches a high-sample GGX-weighted oracle at r = 0.4") {
  PrecomputeOptions opts;
  opts.prefilter_samples = 1024;
  const CubeMap base = smooth_env(32, 77);
  const auto chain = prefilter_specular(base, opts);
  const int level = 2;  // roughness 2/5 = 0.4
  const int res = chain[level].face_res();

  Pcg32 rng(99);
  for (int trial = 0; trial < 3; ++trial) {
    const int face = rng.next_below(6);
    const int x = rng.next_below(res), y = rng.next_below(res);
    const Vec3 n = chain[level].texel_direction(face, x, y);
    Vec3 tangent, bitangent;
    make_basis(n, tangent, bitangent);
    // Independent estimator: pure-random GGX half-vector sampling, 1e6 draws.
    Vec3 num = Vec3::Zero();
    double den = 0.0;
    for (int s = 0; s < 1000000; ++s) {
      const Vec2 u(rng.next_double(), rng.next_double());
      const Vec3 hl = ggx_sample_half(u, 0.4);
      const Vec3 h = hl.x() * tangent + hl.y() * bitangent + hl.z() * n;
      const Vec3 l = 2.0 * n.dot(h) * h - n;
      const double w = n.dot(l);
      if (w <= 0.0) continue;
      num += base.sample(l) * w;
      den += w;
    }
    const Vec3 expected = num / den;
    const Vec3 got = chain[level].texel(face, x, y);
    CHECK((got - expected).norm() <= 0.03 * expected.norm());
  }
}

TEST_CASE("prefilter operator and its adjoint agree (dot-product test)") {
  PrecomputeOptions opts;
  opts.prefilter_samples = 32;
  Pcg32 rng(31);
  CubeMap x(8);
  for (Vec3& t : x.texels()) t = Vec3(rng.next_double(), rng.next_double(), rng.next_double());
  const auto ax = prefilter_specular(x, opts);

  std::vector<CubeMap> y;
  for (const CubeMap& mip : ax) {
    CubeMap g(mip.face_res());
    for (Vec3& t : g.texels())
      t = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    y.push_back(std::move(g));
  }
  CubeMap aty(8);
  prefilter_backward(y, x, opts, aty);

  double lhs = 0.0, rhs = 0.0;
  for (size_t level = 0; level < ax.size(); ++level)
    for (size_t i = 0; i < ax[level].texel_count(); ++i)
      lhs += ax[level].texels()[i].dot(y[level].texels()[i]);
  for (size_t i = 0; i < x.texel_count(); ++i) rhs += x.texels()[i].dot(aty.texels()[i]);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
}

TEST_CASE("brdf terms: closed-form anchors") {
  for (const double r : {0.04, 0.3, 0.7, 1.0}) {
    const double alpha = r * r;
    CHECK(ggx_d(1.0, r) == doctest::Approx(1.0 / (kPi * alpha * alpha)).epsilon(1e-9));
  }
  const Vec3 f0(0.2, 0.5, 0.9);
  CHECK((fresnel_schlick(1.0, f0) - f0).norm() < 1e-12);
  CHECK((fresnel_schlick(0.0, f0) - Vec3::Ones()).norm() < 1e-12);
}

TEST_CASE("brdf lut: near-mirror head-on entry approaches (1, 0)") {
  const BrdfLut lut(64, 1024);
  const Vec2 e = lut.sample(1.0, 0.04);
  CHECK(e.x() >= 0.95);
  CHECK(e.y() <= 0.05);
}

TEST_CASE("brdf lut: entries finite with bounded energy") {
  const BrdfLut lut(64, 256);
  for (const Vec2& e : lut.data()) {
    CHECK(std::isfinite(e.x()));
    CHECK(std::isfinite(e.y()));
    CHECK(e.x() >= 0.0);
    CHECK(e.y() >= 0.0);
    CHECK(e.x() + e.y() <= 1.5);
  }
}

TEST_CASE("brdf lut is bit-identical across builds") {
  const BrdfLut a(32, 128);
  const BrdfLut b(32, 128);
  for (size_t i = 0; i < a.data().size(); ++i) {
    CHECK(a.data()[i].x() == b.data()[i].x());
    CHECK(a.data()[i].y() == b.data()[i].y());
  }
}

TEST_CASE("deferred shade: diffuse identity under uniform light") {
  // c_diff = (k_d/pi) * (pi L) = k_d * L.
  EnvironmentLight light(uniform_env(16, Vec3(2.0, 1.0, 0.5)));
  PrecomputeOptions opts;
  opts.irradiance_res = 16;
  opts.prefilter_samples = 128;
  light.refresh(opts);

  const Vec3 kd(0.8, 0.4, 0.2);
  const GBuffer gb = single_pixel_gbuffer(Vec3(0.3, -0.2, -0.9).normalized(), kd, 0.5,
                                          Vec3::Zero());
  Camera cam = testutil::test_camera(1, 1, 10.0);
  const Image img = deferred_shade(gb, cam, light);
  const Vec3 expected = kd.cwiseProduct(Vec3(2.0, 1.0, 0.5));
  for (int c = 0; c < 3; ++c)
    CHECK(img.at(0, 0, c) == doctest::Approx(expected[c]).epsilon(0.02));
}

TEST_CASE("deferred shade: empty pixels show the background") {
  EnvironmentLight light(uniform_env(8, Vec3::Ones()));
  PrecomputeOptions opts;
  opts.irradiance_res = 8;
  opts.prefilter_samples = 32;
  light.refresh(opts);
  GBuffer gb = single_pixel_gbuffer(Vec3::UnitZ(), Vec3::Ones(), 0.5, Vec3::Zero(), 2);
  gb.alpha_map.fill(0.0);
  ShadeOptions shade_opts;
  shade_opts.background = Vec3(0.1, 0.2, 0.3);
  const Image img = deferred_shade(gb, testutil::test_camera(2, 2), light, shade_opts);
  CHECK((img.rgb(0, 0) - Vec3(0.1, 0.2, 0.3)).norm() < 1e-12);
}

TEST_CASE("deferred shade refuses a dirty light") {
  EnvironmentLight light(uniform_env(8, Vec3::Ones()));
  const GBuffer gb = single_pixel_gbuffer(Vec3::UnitZ(), Vec3::Ones(), 0.5, Vec3::Zero());
  CHECK_THROWS_AS(deferred_shade(gb, testutil::test_camera(1, 1), light), StaleLightError);
}

TEST_CASE("shading is linear in the environment radiance") {
  const CubeMap base = smooth_env(16, 8);
  PrecomputeOptions opts;
  opts.irradiance_res = 8;
  opts.prefilter_samples = 64;

  EnvironmentLight light(base);
  light.refresh(opts);
  CubeMap scaled_base = base;
  for (Vec3& t : scaled_base.texels()) t *= 3.5;
  EnvironmentLight scaled(scaled_base);
  scaled.refresh(opts);

  Pcg32 rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec3 n = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.2, -1.0)).normalized();
    const GBuffer gb = single_pixel_gbuffer(
        n, Vec3(rng.next_double(), rng.next_double(), rng.next_double()),
        rng.uniform(0.04, 1.0), Vec3(rng.next_double(), rng.next_double(), rng.next_double()));
    Camera cam = testutil::test_camera(1, 1);
    const Image a = deferred_shade(gb, cam, light);
    const Image b = deferred_shade(gb, cam, scaled);
    for (int c = 0; c < 3; ++c)
      CHECK(b.at(0, 0, c) == doctest::Approx(3.5 * a.at(0, 0, c)).epsilon(1e-9));
  }
}

TEST_CASE("uniform environment shading is independent of the normal") {
  EnvironmentLight light(uniform_env(16, Vec3::Ones()));
  PrecomputeOptions opts;
  opts.irradiance_res = 16;
  opts.prefilter_samples = 256;
  light.refresh(opts);
  Camera cam = testutil::test_camera(1, 1);
  Pcg32 rng(40);
  Vec3 first = Vec3::Zero();
  for (int trial = 0; trial < 8; ++trial) {
    const Vec3 n =
        Vec3(rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7), rng.uniform(-1.0, -0.4)).normalized();
    const GBuffer gb = single_pixel_gbuffer(n, Vec3(0.5, 0.5, 0.5), 0.35, Vec3(0.3, 0.3, 0.3));
    const Image img = deferred_shade(gb, cam, light);
    if (trial == 0)
      first = img.rgb(0, 0);
    else
      for (int c = 0; c < 3; ++c)
        CHECK(img.at(0, 0, c) == doctest::Approx(first[c]).epsilon(0.02));
  }
}

TEST_CASE("monte carlo reference: black environment, black result") {
  ShadePoint p;
  p.normal = Vec3::UnitZ();
  p.view = Vec3(0.3, 0.1, 0.95).normalized();
  p.diffuse_albedo = Vec3(0.7, 0.7, 0.7);
  p.roughness = 0.4;
  p.specular_albedo = Vec3(0.2, 0.2, 0.2);
  CHECK(monte_carlo_reference(p, uniform_env(8, Vec3::Zero()), 1000).norm() == 0.0);
}

TEST_CASE("monte carlo reference: pure diffuse under uniform light is kd*L") {
  ShadePoint p;
  p.normal = Vec3(0.2, -0.3, 0.93).normalized();
  p.view = Vec3(-0.1, 0.2, 0.97).normalized();
  p.diffuse_albedo = Vec3(0.6, 0.3, 0.9);
  p.roughness = 0.5;
  p.specular_albedo = Vec3::Zero();
  const Vec3 L(1.5, 1.0, 0.5);
  const Vec3 got = monte_carlo_reference(p, uniform_env(8, L), 100000, 1);
  const Vec3 expected = p.diffuse_albedo.cwiseProduct(L);
  for (int c = 0; c < 3; ++c) CHECK(got[c] == doctest::Approx(expected[c]).epsilon(0.01));
}

TEST_CASE("monte carlo reference: seeds agree at high sample counts") {
  ShadePoint p;
  p.normal = Vec3::UnitZ();
  p.view = Vec3(0.5, 0.0, 0.87).normalized();
  p.diffuse_albedo = Vec3(0.4, 0.5, 0.6);
  p.roughness = 0.25;
  p.specular_albedo = Vec3(0.6, 0.5, 0.4);
  const CubeMap env = smooth_env(32, 123);
  const Vec3 a = monte_carlo_reference(p, env, 1000000, 11);
  const Vec3 b = monte_carlo_reference(p, env, 1000000, 222);
  CHECK((a - b).norm() <= 0.01 * a.norm());
}

TEST_CASE("split-sum tracks the monte carlo reference (smoke)") {
  const CubeMap base = smooth_env(32, 55);
  EnvironmentLight light(base);
  PrecomputeOptions opts;
  opts.irradiance_res = 16;
  opts.prefilter_samples = 1024;
  light.refresh(opts);
  Camera cam = testutil::test_camera(1, 1);

  Pcg32 rng(17);
  for (int trial = 0; trial < 6; ++trial) {
    ShadePoint p;
    // The 1x1 camera's pixel ray is the fixed view; choose a normal facing it.
    p.view = -cam.ray_direction(0.5, 0.5);
    Vec3 n;
    do {
      n = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
    } while (n.dot(p.view) < 0.3);
    p.normal = n;
    p.diffuse_albedo = Vec3(rng.next_double(), rng.next_double(), rng.next_double());
    p.roughness = rng.uniform(0.1, 1.0);
    p.specular_albedo = Vec3(rng.next_double(), rng.next_double(), rng.next_double());

    const GBuffer gb =
        single_pixel_gbuffer(p.normal, p.diffuse_albedo, p.roughness, p.specular_albedo);
    const Vec3 split = deferred_shade(gb, cam, light).rgb(0, 0);
    const Vec3 mc = monte_carlo_reference(p, base, 200000, 5);
    const double err = std::abs(luminance(split) - luminance(mc)) / std::max(luminance(mc), 1e-9);
    CHECK(err <= 0.25);  // acceptance runs the tight battery
  }
}

TEST_CASE("shade backward matches finite differences (G-buffer and environment)") {
  const CubeMap base = smooth_env(8, 42);
  PrecomputeOptions opts;
  opts.irradiance_res = 8;
  opts.prefilter_samples = 64;
  opts.seed = 9;

  Camera cam = testutil::test_camera(2, 2);
  Pcg32 rng(71);
  GBuffer gb = single_pixel_gbuffer(Vec3::Zero(), Vec3::Zero(), 0.0, Vec3::Zero(), 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      const Vec3 ray = cam.ray_direction(x + 0.5, y + 0.5);
      Vec3 n;
      do {
        n = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
      } while (n.dot(-ray) < 0.35);
      gb.normal_map.set_rgb(x, y, n);
      gb.albedo_map.set_rgb(x, y, Vec3(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                                       rng.uniform(0.2, 0.8)));
      gb.roughness_map.at(x, y) = rng.uniform(0.25, 0.8);
      gb.specular_map.set_rgb(x, y, Vec3(rng.uniform(0.1, 0.8), rng.uniform(0.1, 0.8),
                                         rng.uniform(0.1, 0.8)));
      gb.alpha_map.at(x, y) = 0.9;
    }

  Image weights(2, 2, 3);
  for (double& v : weights.data()) v = rng.uniform(-1.0, 1.0);
  ShadeOptions shade_opts;
  shade_opts.background = Vec3(0.2, 0.1, 0.05);

  auto loss_for_light = [&](const CubeMap& b) {
    EnvironmentLight l(b);
    l.refresh(opts);
    const Image img = deferred_shade(gb, cam, l, shade_opts);
    double total = 0.0;
    for (size_t i = 0; i < img.size(); ++i) total += img.data()[i] * weights.data()[i];
    return total;
  };

  EnvironmentLight light(base);
  light.refresh(opts);
  const ShadeGrads grads = deferred_shade_backward(weights, gb, cam, light, shade_opts);

  auto loss = [&]() {
    const Image img = deferred_shade(gb, cam, light, shade_opts);
    double total = 0.0;
    for (size_t i = 0; i < img.size(); ++i) total += img.data()[i] * weights.data()[i];
    return total;
  };

  const double h = 1e-5;
  double worst = 0.0;
  auto fd_check = [&](double* p, double analytic) {
    const double saved = *p;
    *p = saved + h;
    const double up = loss();
    *p = saved - h;
    const double down = loss();
    *p = saved;
    const double fd = (up - down) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-5});
    worst = std::max(worst, std::abs(fd - analytic) / denom);
  };

  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      for (int c = 0; c < 3; ++c) {
        fd_check(&gb.albedo_map.at(x, y, c), grads.d_albedo.at(x, y, c));
        fd_check(&gb.specular_map.at(x, y, c), grads.d_specular.at(x, y, c));
        fd_check(&gb.normal_map.at(x, y, c), grads.d_normal_unit.at(x, y, c));
      }
      fd_check(&gb.roughness_map.at(x, y), grads.d_roughness.at(x, y));
      fd_check(&gb.alpha_map.at(x, y), grads.d_alpha.at(x, y));
    }
  CHECK(worst <= 1e-3);

  // Environment texels: chain the shade gradients through both precompute
  // adjoints, then compare against finite differences of the whole pipeline.
  CubeMap d_base(base.face_res());
  irradiance_backward(grads.d_irradiance, base, opts, d_base);
  prefilter_backward(grads.d_prefiltered, base, opts, d_base);

  CubeMap fd_env = base;
  double worst_env = 0.0;
  Pcg32 pick(5);
  for (int k = 0; k < 12; ++k) {
    const size_t t = pick.next_below(static_cast<uint32_t>(base.texel_count()));
    const int c = pick.next_below(3);
    const double saved = fd_env.texels()[t][c];
    fd_env.texels()[t][c] = saved + 1e-3;
    const double up = loss_for_light(fd_env);
    fd_env.texels()[t][c] = saved - 1e-3;
    const double down = loss_for_light(fd_env);
    fd_env.texels()[t][c] = saved;
    const double fd = (up - down) / 2e-3;
    const double analytic = d_base.texels()[t][c];
    const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-5});
    worst_env = std::max(worst_env, std::abs(fd - analytic) / denom);
  }
  CHECK(worst_env <= 5e-3);
}
