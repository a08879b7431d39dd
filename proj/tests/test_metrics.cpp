// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dgs/metrics/metrics.hpp"
#include "test_utils.hpp"

using namespace dgs;

namespace {

Image random_image(int w, int h, int c, Pcg32& rng) {
  Image img(w, h, c);
  for (double& v : img.data()) v = rng.next_double();
  return img;
}

Image unit_normal_image(int w, int h, Pcg32& rng) {
  Image img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Vec3 n =
          Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
      img.set_rgb(x, y, n);
    }
  return img;
}

}  // namespace

TEST_CASE("psnr: identity cap, hand value, symmetry") {
  Pcg32 rng(1);
  const Image a = random_image(16, 16, 3, rng);
  CHECK(psnr(a, a) == 100.0);

  // all-0 vs all-0.5: MSE = 0.25, 10 log10(1/0.25) = 6.0206.
  const Image zeros(8, 8, 3, 0.0);
  const Image halves(8, 8, 3, 0.5);
  CHECK(psnr(zeros, halves) == doctest::Approx(6.0206).epsilon(1e-4));

  const Image b = random_image(16, 16, 3, rng);
  CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)).epsilon(1e-12));
  CHECK(psnr(a, b) > 0.0);

  CHECK_THROWS_AS(psnr(a, Image(4, 4, 3)), ConsistencyError);
}

TEST_CASE("ssim: identity is one, negative correlation scores low") {
  Pcg32 rng(2);
  const Image a = random_image(24, 24, 3, rng);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  // Mid-gray complement: structure inverted.
  Image inv = a;
  for (double& v : inv.data()) v = 1.0 - v;
  CHECK(ssim(a, inv) < 0.5);

  // Bounded in (-1, 1].
  const Image b = random_image(24, 24, 3, rng);
  const double s = ssim(a, b);
  CHECK(s > -1.0);
  CHECK(s <= 1.0);
}

TEST_CASE("ssim: constant-vs-constant stays finite via stabilizers") {
  const Image a(16, 16, 3, 0.25);
  const Image b(16, 16, 3, 0.75);
  const double s = ssim(a, b);
  CHECK(std::isfinite(s));
  CHECK(s < 1.0);
}

TEST_CASE("ssim gradient matches finite differences") {
  Pcg32 rng(3);
  Image a = random_image(14, 13, 3, rng);
  const Image b = random_image(14, 13, 3, rng);
  Image d_a;
  ssim_with_gradient(a, b, d_a);
  REQUIRE(d_a.same_shape(a));

  double worst = 0.0;
  const double h = 1e-6;
  for (int probe = 0; probe < 60; ++probe) {
    const size_t idx = rng.next_below(static_cast<uint32_t>(a.size()));
    const double saved = a.data()[idx];
    a.data()[idx] = saved + h;
    const double up = ssim(a, b);
    a.data()[idx] = saved - h;
    const double down = ssim(a, b);
    a.data()[idx] = saved;
    const double fd = (up - down) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(d_a.data()[idx]), 1e-4});
    worst = std::max(worst, std::abs(fd - d_a.data()[idx]) / denom);
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("normal mse: identity, antipodal, small rotation") {
  Pcg32 rng(4);
  const Image gt = unit_normal_image(12, 12, rng);
  const Image mask(12, 12, 1, 1.0);
  CHECK(normal_mse(gt, gt, mask) == 0.0);

  Image neg = gt;
  for (double& v : neg.data()) v = -v;
  CHECK(normal_mse(neg, gt, mask) == doctest::Approx(4.0).epsilon(1e-12));

  // |a-b|^2 = 2 - 2 a.b; for normals perpendicular to the rotation axis the
  // dot is exactly cos(10 deg).
  const double angle = 10.0 * kPi / 180.0;
  const Vec3 axis = Vec3(1, 2, -0.5).normalized();
  const Mat3 rot = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
  Image in_plane(12, 12, 3), rotated(12, 12, 3);
  Pcg32 rng2(44);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) {
      Vec3 n;
      do {
        n = Vec3(rng2.uniform(-1, 1), rng2.uniform(-1, 1), rng2.uniform(-1, 1));
        n -= axis * n.dot(axis);
      } while (n.norm() < 1e-3);
      n.normalize();
      in_plane.set_rgb(x, y, n);
      rotated.set_rgb(x, y, rot * n);
    }
  CHECK(normal_mse(rotated, in_plane, mask) ==
        doctest::Approx(2.0 - 2.0 * std::cos(angle)).epsilon(1e-9));

  CHECK_THROWS_AS(normal_mse(gt, gt, Image(12, 12, 1, 0.0)), ConsistencyError);
}

TEST_CASE("albedo scale alignment recovers an exact rescale") {
  Pcg32 rng(5);
  const Image gt = random_image(10, 10, 3, rng);
  Image pred = gt;
  for (double& v : pred.data()) v *= 0.5;
  const Image mask(10, 10, 1, 1.0);
  const Image aligned = albedo_scale_align(pred, gt, mask);
  CHECK(max_abs_diff(aligned, gt) <= 1e-12);
}

TEST_CASE("albedo scale alignment skips dark ground-truth channels") {
  Pcg32 rng(6);
  Image pred = random_image(10, 10, 3, rng);
  const Image gt(10, 10, 3, 0.0);
  const Image mask(10, 10, 1, 1.0);
  const Image aligned = albedo_scale_align(pred, gt, mask);
  CHECK(max_abs_diff(aligned, pred) == 0.0);
}

TEST_CASE("albedo scale alignment never hurts the residual") {
  Pcg32 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Image gt = random_image(8, 8, 3, rng);
    const Image pred = random_image(8, 8, 3, rng);
    const Image mask(8, 8, 1, 1.0);
    const Image aligned = albedo_scale_align(pred, gt, mask);
    CHECK(mean_sq_diff(aligned, gt) <= mean_sq_diff(pred, gt) + 1e-12);
  }
}

TEST_CASE("metric report aggregates and writes csv") {
  MetricReport report;
  report.rows.push_back({"v0", 30.0, 0.9, 0.01});
  report.rows.push_back({"v1", 40.0, 1.0, std::numeric_limits<double>::quiet_NaN()});
  const MetricRow mean = report.aggregate();
  CHECK(mean.psnr == doctest::Approx(35.0));
  CHECK(mean.ssim == doctest::Approx(0.95));
  CHECK(mean.normal_mse == doctest::Approx(0.01));

  const auto dir = std::filesystem::temp_directory_path() / "dgs_metrics";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "report.csv").string();
  write_report_csv(report, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "view,psnr,ssim,normal_mse");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);  // two views plus the mean row
}
