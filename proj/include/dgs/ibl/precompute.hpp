// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "dgs/ibl/cubemap.hpp"

namespace dgs {

/// Number of prefiltered specular mip levels; level l covers roughness
/// l / (kPrefilterLevels - 1).
constexpr int kPrefilterLevels = 6;

/// Radiance ceiling applied before prefiltering to bound firefly variance.
constexpr double kRadianceClamp = 1e4;

struct PrecomputeOptions {
  int irradiance_res = 32;
  int prefilter_samples = 1024;
  uint64_t seed = 0;
  int threads = 1;
};

/// 2D split-sum table over (n.v, roughness) storing the Fresnel scale and
/// bias applied to the prefiltered radiance. Environment-independent.
class BrdfLut {
 public:
  BrdfLut() = default;
  BrdfLut(int size, int samples);

  int size() const { return size_; }
  bool empty() const { return size_ == 0; }

  Vec2 entry(int i, int j) const { return table_[static_cast<size_t>(j) * size_ + i]; }
  Vec2& entry(int i, int j) { return table_[static_cast<size_t>(j) * size_ + i]; }

  /// Bilinear lookup; x = n.v in [0,1], y = roughness in [0,1].
  Vec2 sample(double n_dot_v, double roughness) const;

  /// Lookup plus partial derivatives of (scale, bias) w.r.t. both axes.
  Vec2 sample_with_gradient(double n_dot_v, double roughness, Vec2& d_dnv, Vec2& d_dr) const;

  const std::vector<Vec2>& data() const { return table_; }

 private:
  int size_ = 0;
  std::vector<Vec2> table_;
};

/// Cosine-convolved environment: texel(n) = integral of L(w) (w.n) dw over
/// the hemisphere of n (the k_d/pi factor is applied at shade time).
/// Evaluated by summed solid-angle quadrature over every base texel.
CubeMap precompute_irradiance(const CubeMap& base, const PrecomputeOptions& opts);

/// GGX-prefiltered radiance chain; level 0 is a mirror copy of the base,
/// level l targets roughness l / (levels-1). Uses the n = v approximation.
std::vector<CubeMap> prefilter_specular(const CubeMap& base, const PrecomputeOptions& opts);

BrdfLut precompute_brdf_lut(int size = 256, int samples = 1024);

/// All three split-sum products for one environment.
struct PrecomputedLight {
  CubeMap irradiance;
  std::vector<CubeMap> prefiltered;
  BrdfLut brdf_lut;

  bool ready() const {
    return !irradiance.empty() && prefiltered.size() == kPrefilterLevels && !brdf_lut.empty();
  }

  /// Trilinear lookup across the mip chain at mip = roughness*(levels-1).
  Vec3 sample_prefiltered(const Vec3& dir, double roughness) const;

  /// Lookup plus d(value)/d(dir) and d(value)/d(roughness).
  Vec3 sample_prefiltered_with_gradient(const Vec3& dir, double roughness, Mat3& d_ddir,
                                        Vec3& d_drough) const;

  /// Adjoint of sample_prefiltered: scatters `grad` into the two mip levels
  /// the lookup blended. `d_levels` must hold one zeroed CubeMap per level.
  void splat_prefiltered_gradient(const Vec3& dir, double roughness, const Vec3& grad,
                                  std::vector<CubeMap>& d_levels) const;
};

/// Adjoints of the precompute operators. They replay the same fixed sample
/// sequences as the forward pass (same options/seed), so the scatter weights
/// are exactly the forward gather weights. `base` supplies the values only to
/// resolve the radiance clamp's active set.
void irradiance_backward(const CubeMap& d_irradiance, const CubeMap& base,
                         const PrecomputeOptions& opts, CubeMap& d_base);
void prefilter_backward(const std::vector<CubeMap>& d_prefiltered, const CubeMap& base,
                        const PrecomputeOptions& opts, CubeMap& d_base);

}  // namespace dgs
