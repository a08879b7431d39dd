// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/ibl/precompute.hpp"

#include <mutex>

#include "dgs/core/parallel.hpp"
#include "dgs/core/random.hpp"
#include "dgs/ibl/brdf.hpp"
#include "dgs/ibl/environment.hpp"

namespace dgs {

namespace {

CubeMap clamp_radiance(const CubeMap& base) {
  CubeMap out = base;
  for (Vec3& t : out.texels())
    for (int c = 0; c < 3; ++c) t[c] = std::min(t[c], kRadianceClamp);
  return out;
}

Vec2 texel_scramble(int tag, int face, int x, int y, uint64_t seed) {
  const uint64_t h = hash_mix(seed ^ hash_mix((static_cast<uint64_t>(tag) << 40) ^
                                              (static_cast<uint64_t>(face) << 32) ^
                                              (static_cast<uint64_t>(x) << 16) ^
                                              static_cast<uint64_t>(y)));
  return Vec2((h & 0xffffffffu) * (1.0 / 4294967296.0),
              (h >> 32) * (1.0 / 4294967296.0));
}

double prefilter_roughness(int level) {
  return static_cast<double>(level) / (kPrefilterLevels - 1);
}

int prefilter_res(int base_res, int level) {
  return std::max(base_res >> level, 1);
}

// Exact solid angle of the face rectangle [0,0]..[x,y] in [-1,1]^2 coords.
double area_element(double x, double y) {
  return std::atan2(x * y, std::sqrt(x * x + y * y + 1.0));
}

double texel_solid_angle(int res, int x, int y) {
  const double x0 = 2.0 * x / res - 1.0;
  const double x1 = 2.0 * (x + 1) / res - 1.0;
  const double y0 = 2.0 * y / res - 1.0;
  const double y1 = 2.0 * (y + 1) / res - 1.0;
  return area_element(x1, y1) - area_element(x0, y1) - area_element(x1, y0) +
         area_element(x0, y0);
}

struct QuadratureSource {
  std::vector<Vec3> dirs;
  std::vector<double> weights;  // solid angles
};

QuadratureSource quadrature_source(const CubeMap& map) {
  QuadratureSource src;
  const int res = map.face_res();
  src.dirs.reserve(map.texel_count());
  src.weights.reserve(map.texel_count());
  for (int face = 0; face < 6; ++face)
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x) {
        src.dirs.push_back(map.texel_direction(face, x, y));
        src.weights.push_back(texel_solid_angle(res, x, y));
      }
  return src;
}

}  // namespace

CubeMap precompute_irradiance(const CubeMap& base, const PrecomputeOptions& opts) {
  // Summed solid-angle quadrature over every base texel: exact in the base
  // radiance (linear operator), deterministic, and adjointable in closed
  // form. E(n) = sum_t L_t max(d_t . n, 0) w_t.
  const CubeMap clamped = clamp_radiance(base);
  const QuadratureSource src = quadrature_source(clamped);
  CubeMap out(opts.irradiance_res);
  const int res = opts.irradiance_res;
  parallel_for(static_cast<int64_t>(6) * res * res, opts.threads,
               [&](int64_t begin, int64_t end, int) {
    for (int64_t t = begin; t < end; ++t) {
      const int face = static_cast<int>(t / (res * res));
      const int y = static_cast<int>((t / res) % res);
      const int x = static_cast<int>(t % res);
      const Vec3 n = out.texel_direction(face, x, y);
      Vec3 sum = Vec3::Zero();
      for (size_t s = 0; s < src.dirs.size(); ++s) {
        const double cos_w = src.dirs[s].dot(n);
        if (cos_w > 0.0) sum += clamped.texels()[s] * (cos_w * src.weights[s]);
      }
      out.texel(face, x, y) = sum;
    }
  });
  return out;
}

void irradiance_backward(const CubeMap& d_irradiance, const CubeMap& base,
                         const PrecomputeOptions& opts, CubeMap& d_base) {
  const QuadratureSource src = quadrature_source(base);
  const int res = opts.irradiance_res;
  for (int face = 0; face < 6; ++face) {
    for (int y = 0; y < res; ++y) {
      for (int x = 0; x < res; ++x) {
        const Vec3 grad = d_irradiance.texel(face, x, y);
        if (grad.isZero(0.0)) continue;
        const Vec3 n = d_irradiance.texel_direction(face, x, y);
        for (size_t s = 0; s < src.dirs.size(); ++s) {
          const double cos_w = src.dirs[s].dot(n);
          if (cos_w > 0.0) d_base.texels()[s] += grad * (cos_w * src.weights[s]);
        }
      }
    }
  }
  // Radiance clamp: no gradient into saturated texels.
  for (size_t i = 0; i < d_base.texel_count(); ++i)
    for (int c = 0; c < 3; ++c)
      if (base.texels()[i][c] >= kRadianceClamp) d_base.texels()[i][c] = 0.0;
}

std::vector<CubeMap> prefilter_specular(const CubeMap& base, const PrecomputeOptions& opts) {
  const CubeMap clamped = clamp_radiance(base);
  std::vector<CubeMap> chain;
  chain.reserve(kPrefilterLevels);
  chain.push_back(clamped);  // level 0: mirror
  for (int level = 1; level < kPrefilterLevels; ++level) {
    const int res = prefilter_res(base.face_res(), level);
    const double roughness = prefilter_roughness(level);
    CubeMap mip(res);
    parallel_for(static_cast<int64_t>(6) * res * res, opts.threads,
                 [&](int64_t begin, int64_t end, int) {
      for (int64_t t = begin; t < end; ++t) {
        const int face = static_cast<int>(t / (res * res));
        const int y = static_cast<int>((t / res) % res);
        const int x = static_cast<int>(t % res);
        // n = v = reflection direction: the split-sum prefilter approximation.
        const Vec3 n = mip.texel_direction(face, x, y);
        Vec3 tangent, bitangent;
        make_basis(n, tangent, bitangent);
        const Vec2 rot = texel_scramble(level, face, x, y, opts.seed);
        Vec3 sum = Vec3::Zero();
        double weight_sum = 0.0;
        for (int s = 0; s < opts.prefilter_samples; ++s) {
          const Vec2 u = rotate_sample(hammersley(s, opts.prefilter_samples), rot);
          const Vec3 h_local = ggx_sample_half(u, roughness);
          const Vec3 h = h_local.x() * tangent + h_local.y() * bitangent + h_local.z() * n;
          const Vec3 l = 2.0 * n.dot(h) * h - n;
          const double n_dot_l = n.dot(l);
          if (n_dot_l <= 0.0) continue;
          sum += clamped.sample(l) * n_dot_l;
          weight_sum += n_dot_l;
        }
        mip.texel(face, x, y) = weight_sum > 0.0 ? Vec3(sum / weight_sum) : Vec3::Zero();
      }
    });
    chain.push_back(std::move(mip));
  }
  return chain;
}

void prefilter_backward(const std::vector<CubeMap>& d_prefiltered, const CubeMap& base,
                        const PrecomputeOptions& opts, CubeMap& d_base) {
  // Level 0 is a plain copy.
  if (!d_prefiltered.empty() && !d_prefiltered[0].empty()) {
    for (size_t i = 0; i < d_base.texel_count(); ++i)
      d_base.texels()[i] += d_prefiltered[0].texels()[i];
  }
  for (int level = 1; level < static_cast<int>(d_prefiltered.size()); ++level) {
    const CubeMap& d_mip = d_prefiltered[level];
    if (d_mip.empty()) continue;
    const int res = prefilter_res(base.face_res(), level);
    const double roughness = prefilter_roughness(level);
    for (int face = 0; face < 6; ++face) {
      for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
          const Vec3 grad = d_mip.texel(face, x, y);
          if (grad.isZero(0.0)) continue;
          const Vec3 n = d_mip.texel_direction(face, x, y);
          Vec3 tangent, bitangent;
          make_basis(n, tangent, bitangent);
          const Vec2 rot = texel_scramble(level, face, x, y, opts.seed);
          // First pass reproduces the normalization weight, second scatters.
          double weight_sum = 0.0;
          for (int s = 0; s < opts.prefilter_samples; ++s) {
            const Vec2 u = rotate_sample(hammersley(s, opts.prefilter_samples), rot);
            const Vec3 h_local = ggx_sample_half(u, roughness);
            const Vec3 h = h_local.x() * tangent + h_local.y() * bitangent + h_local.z() * n;
            const Vec3 l = 2.0 * n.dot(h) * h - n;
            const double n_dot_l = n.dot(l);
            if (n_dot_l > 0.0) weight_sum += n_dot_l;
          }
          if (weight_sum <= 0.0) continue;
          for (int s = 0; s < opts.prefilter_samples; ++s) {
            const Vec2 u = rotate_sample(hammersley(s, opts.prefilter_samples), rot);
            const Vec3 h_local = ggx_sample_half(u, roughness);
            const Vec3 h = h_local.x() * tangent + h_local.y() * bitangent + h_local.z() * n;
            const Vec3 l = 2.0 * n.dot(h) * h - n;
            const double n_dot_l = n.dot(l);
            if (n_dot_l <= 0.0) continue;
            d_base.splat_gradient(l, grad * (n_dot_l / weight_sum));
          }
        }
      }
    }
  }
  for (size_t i = 0; i < d_base.texel_count(); ++i)
    for (int c = 0; c < 3; ++c)
      if (base.texels()[i][c] >= kRadianceClamp) d_base.texels()[i][c] = 0.0;
}

BrdfLut::BrdfLut(int size, int samples) : size_(size), table_(static_cast<size_t>(size) * size) {
  for (int j = 0; j < size; ++j) {
    const double roughness = (j + 0.5) / size;
    for (int i = 0; i < size; ++i) {
      const double n_dot_v = (i + 0.5) / size;
      const Vec3 v(std::sqrt(std::max(0.0, 1.0 - n_dot_v * n_dot_v)), 0.0, n_dot_v);
      double scale = 0.0, bias = 0.0;
      for (int s = 0; s < samples; ++s) {
        const Vec3 h = ggx_sample_half(hammersley(s, samples), roughness);
        const Vec3 l = 2.0 * v.dot(h) * h - v;
        const double n_dot_l = l.z();
        if (n_dot_l <= 0.0) continue;
        const double n_dot_h = std::max(h.z(), 0.0);
        const double v_dot_h = std::max(v.dot(h), 1e-9);
        const double g = smith_g(n_dot_v, n_dot_l, roughness);
        const double g_vis = g * v_dot_h / std::max(n_dot_h * n_dot_v, 1e-9);
        const double fc = std::pow(1.0 - v_dot_h, 5.0);
        scale += (1.0 - fc) * g_vis;
        bias += fc * g_vis;
      }
      entry(i, j) = Vec2(scale / samples, bias / samples);
    }
  }
}

namespace {

struct LutTaps {
  int i0, i1, j0, j1;
  double wi, wj;    // smoothstep-eased corner weights
  double dwi, dwj;  // d(eased weight)/d(input), includes the cell scale
};

// Quintic-eased corner interpolation: same table values as bilinear, C2
// across cell boundaries. A raw bilinear lookup has derivative kinks at
// every row and column, which breaks finite-difference validation of the
// roughness chain; the quintic keeps even second derivatives continuous.
LutTaps lut_taps(int size, double x, double y) {
  LutTaps t;
  const double fx = clamped(x * size - 0.5, 0.0, static_cast<double>(size - 1));
  const double fy = clamped(y * size - 0.5, 0.0, static_cast<double>(size - 1));
  t.i0 = std::min(static_cast<int>(fx), size - 2 >= 0 ? size - 2 : 0);
  t.j0 = std::min(static_cast<int>(fy), size - 2 >= 0 ? size - 2 : 0);
  t.i1 = std::min(t.i0 + 1, size - 1);
  t.j1 = std::min(t.j0 + 1, size - 1);
  const double u = clamped(fx - t.i0, 0.0, 1.0);
  const double v = clamped(fy - t.j0, 0.0, 1.0);
  t.wi = u * u * u * (u * (6.0 * u - 15.0) + 10.0);
  t.wj = v * v * v * (v * (6.0 * v - 15.0) + 10.0);
  const double rx = x * size - 0.5, ry = y * size - 0.5;
  t.dwi = (rx > 0.0 && rx < size - 1) ? 30.0 * u * u * (1.0 - u) * (1.0 - u) * size : 0.0;
  t.dwj = (ry > 0.0 && ry < size - 1) ? 30.0 * v * v * (1.0 - v) * (1.0 - v) * size : 0.0;
  return t;
}

}  // namespace

Vec2 BrdfLut::sample(double n_dot_v, double roughness) const {
  const LutTaps t = lut_taps(size_, n_dot_v, roughness);
  return (1 - t.wi) * (1 - t.wj) * entry(t.i0, t.j0) + t.wi * (1 - t.wj) * entry(t.i1, t.j0) +
         (1 - t.wi) * t.wj * entry(t.i0, t.j1) + t.wi * t.wj * entry(t.i1, t.j1);
}

Vec2 BrdfLut::sample_with_gradient(double n_dot_v, double roughness, Vec2& d_dnv,
                                   Vec2& d_dr) const {
  const LutTaps t = lut_taps(size_, n_dot_v, roughness);
  const Vec2 c00 = entry(t.i0, t.j0), c10 = entry(t.i1, t.j0);
  const Vec2 c01 = entry(t.i0, t.j1), c11 = entry(t.i1, t.j1);
  d_dnv = Vec2(t.dwi * ((1 - t.wj) * (c10 - c00) + t.wj * (c11 - c01)));
  d_dr = Vec2(t.dwj * ((1 - t.wi) * (c01 - c00) + t.wi * (c11 - c10)));
  return (1 - t.wi) * (1 - t.wj) * c00 + t.wi * (1 - t.wj) * c10 + (1 - t.wi) * t.wj * c01 +
         t.wi * t.wj * c11;
}

BrdfLut precompute_brdf_lut(int size, int samples) { return BrdfLut(size, samples); }

namespace {

struct MipTaps {
  int l0, l1;
  double frac;
};

MipTaps mip_taps(double roughness) {
  const double mip = clamp01(roughness) * (kPrefilterLevels - 1);
  MipTaps t;
  t.l0 = std::min(static_cast<int>(mip), kPrefilterLevels - 1);
  t.l1 = std::min(t.l0 + 1, kPrefilterLevels - 1);
  t.frac = mip - t.l0;
  return t;
}

}  // namespace

Vec3 PrecomputedLight::sample_prefiltered(const Vec3& dir, double roughness) const {
  const MipTaps t = mip_taps(roughness);
  const Vec3 a = prefiltered[t.l0].sample(dir);
  if (t.l1 == t.l0) return a;
  return (1.0 - t.frac) * a + t.frac * prefiltered[t.l1].sample(dir);
}

Vec3 PrecomputedLight::sample_prefiltered_with_gradient(const Vec3& dir, double roughness,
                                                        Mat3& d_ddir, Vec3& d_drough) const {
  const MipTaps t = mip_taps(roughness);
  Mat3 jac0, jac1;
  const Vec3 a = prefiltered[t.l0].sample_with_jacobian(dir, jac0);
  if (t.l1 == t.l0) {
    d_ddir = jac0;
    d_drough = Vec3::Zero();  // clamped at the last level
    return a;
  }
  const Vec3 b = prefiltered[t.l1].sample_with_jacobian(dir, jac1);
  d_ddir = (1.0 - t.frac) * jac0 + t.frac * jac1;
  d_drough = (b - a) * (kPrefilterLevels - 1);
  return (1.0 - t.frac) * a + t.frac * b;
}

void PrecomputedLight::splat_prefiltered_gradient(const Vec3& dir, double roughness,
                                                  const Vec3& grad,
                                                  std::vector<CubeMap>& d_levels) const {
  const MipTaps t = mip_taps(roughness);
  if (t.l1 == t.l0) {
    d_levels[t.l0].splat_gradient(dir, grad);
    return;
  }
  d_levels[t.l0].splat_gradient(dir, grad * (1.0 - t.frac));
  d_levels[t.l1].splat_gradient(dir, grad * t.frac);
}

namespace {

// The LUT depends on neither the environment nor any run-time seed; share one
// full-quality table process-wide.
const BrdfLut& shared_brdf_lut() {
  static const BrdfLut lut(256, 1024);
  return lut;
}

}  // namespace

void EnvironmentLight::refresh(const PrecomputeOptions& opts) {
  if (base.empty()) throw ConsistencyError("environment base map is empty");
  precomputed.irradiance = precompute_irradiance(base, opts);
  precomputed.prefiltered = prefilter_specular(base, opts);
  if (precomputed.brdf_lut.empty()) precomputed.brdf_lut = shared_brdf_lut();
  dirty = false;
}

}  // namespace dgs
