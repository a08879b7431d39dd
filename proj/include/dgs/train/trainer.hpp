// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dgs/ibl/shade.hpp"
#include "dgs/scene/train_config.hpp"
#include "dgs/sdf/neus.hpp"
#include "dgs/train/adam.hpp"

namespace dgs {

/// One step's loss decomposition. The invariant
/// total = l_nerf + lambda_nd*l_nd + lambda_l1*l_l1 + lambda_ssim*l_ssim +
///         lambda_mask*l_mask + lambda_tv*l_tv
/// holds to 1e-6 (l_nerf already carries its internal Eikonal weight).
struct LossReport {
  double total = 0.0;
  double l_nerf = 0.0, l_nd = 0.0, l_l1 = 0.0, l_ssim = 0.0, l_mask = 0.0, l_tv = 0.0;
  int iteration = 0;

  double recombine(const TrainConfig& c) const {
    return l_nerf + c.lambda_nd * l_nd + c.lambda_l1 * l_l1 + c.lambda_ssim * l_ssim +
           c.lambda_mask * l_mask + c.lambda_tv * l_tv;
  }
};

/// All mutable training state: the scene parameters, their optimizers, and
/// the schedule bookkeeping. One coordinator owns it; parallel regions run
/// inside the passes only.
struct TrainState {
  TrainConfig config;
  GaussianCloud cloud;
  EnvironmentLight light;
  SdfGrid grid;
  int iteration = 0;
  Pcg32 rng;

  Adam adam_diffuse, adam_specular, adam_roughness{1e-8}, adam_normal;
  Adam adam_opacity{1e-15};
  Adam adam_env;
  Adam adam_sdf_values, adam_sdf_diffuse, adam_sdf_tint, adam_sdf_sh;
  Adam adam_deviation;

  // Densification bookkeeping: accumulated |d opacity| per splat.
  std::vector<double> densify_accum;
  std::vector<int> densify_count;

  std::vector<LossReport> history;

  bool in_phase_b() const {
    return iteration >= static_cast<int>(config.phase_a_fraction * config.iterations);
  }
  Vec3 background() const {
    return config.white_background ? Vec3::Ones() : Vec3::Zero();
  }
};

/// Fresh state: random cloud in the (shrunken) bounds, sphere-SDF warm
/// start, uniform environment.
TrainState make_train_state(const TrainConfig& config, const Vec3& bounds_min,
                            const Vec3& bounds_max);

/// Replaces the cloud with surfels sampled on the current SDF level set
/// (positions, normals and appearance from the grid) and resets the
/// per-splat optimizers. Called automatically at the phase A -> B boundary;
/// exposed for tools. No-op if the SDF has no surface yet.
void reseed_cloud_from_sdf(TrainState& state, int count);

/// One optimization step on one view: forward (G-buffer, deferred shading,
/// SDF ray batch), loss assembly, analytic backward, one Adam update per
/// group, invariant restoration, scheduled densify/prune. Throws
/// NumericalError naming the offending term if the loss goes non-finite.
LossReport train_step(TrainState& state, const TrainView& view);

struct DensifyOptions {
  double prune_opacity = 0.005;
  double grad_threshold = 2e-4;
  double split_scale = 0.05;    // world units; larger splats split, smaller clone
  double scale_shrink = 1.6;
  double clone_jitter = 0.3;    // in units of the splat's own sigma
};

struct DensifyResult {
  GaussianCloud cloud;
  std::vector<int> parents;  // per new splat: source index in the old cloud
};

/// Adaptive density control: prunes low-opacity splats, clones small /
/// splits large high-gradient splats (children keep all texture attributes
/// and the normal; split children shrink by scale_shrink).
DensifyResult densify_and_prune(const GaussianCloud& cloud,
                                const std::vector<double>& grad_magnitude,
                                const DensifyOptions& opts, Pcg32& rng);

enum class ParamGroup { kDiffuse, kRoughness, kSpecular, kNormal, kOpacity, kEnvironment };

/// Compares analytic full-loss gradients against central finite differences
/// on the current state (intended for tiny scenes). Returns the maximum
/// relative error over the probed parameters of the group. The default step
/// balances FD truncation against roundoff: the SSIM term carries large
/// higher-order derivatives in near-constant windows (its stabilizers are
/// ~1e-3), so steps much above 1e-5 measure curvature, not the gradient.
double gradient_check(TrainState& state, const TrainView& view, ParamGroup group,
                      double h = 1e-5, int max_probes = 0);

/// Checkpoint directory: scene.dgs, sdf.grid, env.pfm, optimizer.state,
/// report.csv.
void save_checkpoint(const TrainState& state, const std::string& dir);

}  // namespace dgs
