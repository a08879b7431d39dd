// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dgs/core/random.hpp"
#include "dgs/sdf/grid.hpp"

namespace dgs {

/// Discrete occlusion-aware SDF-to-alpha transform:
/// alpha = max((sigmoid(s f_i) - sigmoid(s f_next)) / sigmoid(s f_i), 0).
double neus_alpha(double f_i, double f_next, double s);

/// Partials of neus_alpha (zero on the clamped branch).
struct NeusAlphaGrads {
  double d_f_i = 0.0;
  double d_f_next = 0.0;
  double d_s = 0.0;
};
double neus_alpha_with_grads(double f_i, double f_next, double s, NeusAlphaGrads& grads);

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::UnitZ();  // unit
};

/// A batch of rays with per-ray strictly increasing sample depths.
struct RaySampleBatch {
  std::vector<Ray> rays;
  int samples_per_ray = 0;       // M
  std::vector<double> depths;    // rays.size() * M

  size_t ray_count() const { return rays.size(); }
  double depth(size_t ray, int i) const { return depths[ray * samples_per_ray + i]; }
  Vec3 position(size_t ray, int i) const {
    return rays[ray].origin + depth(ray, i) * rays[ray].dir;
  }
};

/// Stratified depths over the ray's intersection with the grid bounds, plus
/// importance samples concentrated where a coarse first pass finds opacity.
/// Depths are sorted and strictly increasing.
RaySampleBatch make_ray_batch(const SdfGrid& grid, const std::vector<Ray>& rays,
                              int stratified, int importance, Pcg32& rng);

struct VolumeRenderResult {
  std::vector<Vec3> color;       // c' = c_d + p c_l, composited
  std::vector<Vec3> normal;      // unit where opacity > 0, zero otherwise
  std::vector<Vec3> normal_raw;  // composited, before renormalization
  std::vector<double> opacity;
};

VolumeRenderResult volume_render(const SdfGrid& grid, const RaySampleBatch& batch);

/// Gradients of the grid parameters for a loss over the render outputs.
struct GridGrads {
  std::vector<double> d_values;
  std::vector<Vec3> d_diffuse;
  std::vector<double> d_tint;
  std::array<Vec3, 9> d_view_sh = SdfGrid::zero_sh();
  double d_log_deviation = 0.0;

  explicit GridGrads(const SdfGrid& grid)
      : d_values(grid.vertex_count(), 0.0),
        d_diffuse(grid.vertex_count(), Vec3::Zero()),
        d_tint(grid.vertex_count(), 0.0) {}
};

/// Adjoint of volume_render. Per-ray gradient views may be empty vectors to
/// skip a head. d_normal is w.r.t. the raw composited normal (callers chain
/// any renormalization themselves).
void volume_render_backward(const SdfGrid& grid, const RaySampleBatch& batch,
                            const std::vector<Vec3>& d_color,
                            const std::vector<Vec3>& d_normal_raw,
                            const std::vector<double>& d_opacity, GridGrads& grads);

/// Color L1 plus the weighted Eikonal sum:
/// mean |rendered - target| over ray channels
/// + lambda * sum over samples (| |grad f| | - 1)^2.
double nerf_loss(const std::vector<Vec3>& rendered, const std::vector<Vec3>& target,
                 const SdfGrid& grid, const RaySampleBatch& batch, double lambda_eikonal);

/// The unweighted Eikonal sum and its adjoint into the value grid.
double eikonal_term(const SdfGrid& grid, const RaySampleBatch& batch);
void eikonal_backward(const SdfGrid& grid, const RaySampleBatch& batch, double d_term,
                      std::vector<double>& d_values);

/// Normal distillation penalty: sum over pixels of |1 - a . b| for two lists
/// of unit normals. Symmetric; 0 when aligned, 2 per pixel when opposed.
double distillation_loss(const std::vector<Vec3>& gaussian_normals,
                         const std::vector<Vec3>& sdf_normals);

/// d(loss)/d(a_v) and d(loss)/d(b_v).
void distillation_backward(const std::vector<Vec3>& gaussian_normals,
                           const std::vector<Vec3>& sdf_normals, double d_loss,
                           std::vector<Vec3>& d_gaussian, std::vector<Vec3>& d_sdf);

}  // namespace dgs
