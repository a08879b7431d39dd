// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "dgs/core/types.hpp"

namespace dgs {

/// All loss weights, learning rates and schedule knobs for joint training.
/// Serialized as a flat TOML-style key-value document.
struct TrainConfig {
  // Loss weights.
  double lambda_eikonal = 0.1;
  double lambda_nd = 0.5;
  double lambda_l1 = 0.8;
  double lambda_ssim = 0.2;
  double lambda_mask = 0.5;
  double lambda_tv = 0.001;

  // Iterations and phase split. Phase A trains the SDF branch and the
  // photometric/mask losses; distillation and TV come in with phase B.
  int iterations = 30000;
  double phase_a_fraction = 0.3;

  // Ray sampling for the SDF branch.
  int rays_per_batch = 128;       // V
  int samples_per_ray = 96;       // M (stratified + importance)
  int stratified_samples = 64;

  // Per-group learning rates.
  double lr_diffuse = 5e-3;
  double lr_specular = 5e-3;
  double lr_roughness = 5e-3;
  double lr_normal = 2e-3;
  double lr_opacity = 2.5e-2;
  double lr_environment = 1e-2;
  double lr_sdf = 5e-3;
  double lr_sdf_color = 5e-2;
  double lr_deviation = 1e-3;

  // Densify / prune schedule.
  int densify_from = 500;
  int densify_until = 15000;
  int densify_interval = 100;
  double densify_grad_threshold = 2e-4;
  double prune_opacity = 0.005;

  // Environment handling during training.
  int train_env_res = 32;
  int train_precompute_samples = 128;

  // Initialization / structure.
  int init_gaussians = 2000;
  int grid_cells = 64;
  // Re-seed the cloud from the trained SDF surface when phase B starts;
  // positions are not optimized, so the SDF supplies the geometry.
  bool reseed_at_phase_b = true;
  // Learning-rate multiplier reached at the final iteration (exponential).
  double lr_decay = 1.0;

  // Render / data handling.
  bool white_background = false;
  int image_dump_interval = 0;  // 0 disables dumps
  uint64_t seed = 0;
  int threads = 1;

  bool valid() const {
    return lambda_eikonal >= 0 && lambda_nd >= 0 && lambda_l1 >= 0 && lambda_ssim >= 0 &&
           lambda_mask >= 0 && lambda_tv >= 0 && iterations > 0 && rays_per_batch > 0 &&
           samples_per_ray > 1;
  }
};

TrainConfig load_train_config(const std::string& path);
void save_train_config(const TrainConfig& config, const std::string& path);

}  // namespace dgs
