// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/train/trainer.hpp"

#include <filesystem>
#include <fstream>

#include "dgs/core/image_io.hpp"
#include "dgs/scene/scene_io.hpp"
#include "dgs/sdf/marching_cubes.hpp"
#include "dgs/train/losses.hpp"

namespace dgs {

namespace {

uint64_t step_seed(const TrainConfig& config, int iteration) {
  return hash_mix(config.seed ^ (0x9e3779b97f4a7c15ULL * (iteration + 1)));
}

PrecomputeOptions train_precompute_options(const TrainState& state, uint64_t seed) {
  PrecomputeOptions opts;
  opts.irradiance_res = std::min(state.config.train_env_res, state.light.base.face_res());
  opts.prefilter_samples = state.config.train_precompute_samples;
  opts.seed = seed;
  opts.threads = state.config.threads;
  return opts;
}

Image composite_target(const TrainView& view, const Vec3& bg) {
  Image target(view.image.width(), view.image.height(), 3);
  for (int y = 0; y < target.height(); ++y)
    for (int x = 0; x < target.width(); ++x) {
      const double m = view.mask.at(x, y);
      for (int c = 0; c < 3; ++c)
        target.at(x, y, c) = view.image.at(x, y, c) * m + bg[c] * (1.0 - m);
    }
  return target;
}

struct StepForward {
  std::vector<ProjectedGaussian> projected;
  GBuffer gbuffer;
  Image rendered;
  Image target;
  std::vector<int> ray_px, ray_py;
  RaySampleBatch batch;
  VolumeRenderResult volres;
  std::vector<Vec3> sdf_pixel, sdf_target;
  std::vector<size_t> nd_rays;
  LossReport report;
};

StepForward forward_pass(TrainState& state, const TrainView& view, uint64_t seed) {
  const TrainConfig& cfg = state.config;
  StepForward fwd;
  const Vec3 bg = state.background();

  state.light.refresh(train_precompute_options(state, seed));

  RasterizeOptions ropts;
  ropts.threads = cfg.threads;
  fwd.projected = project(state.cloud, view.camera);
  fwd.gbuffer = render_gbuffer(fwd.projected, state.cloud, view.camera, ropts);

  ShadeOptions sopts;
  sopts.background = bg;
  sopts.threads = cfg.threads;
  fwd.rendered = deferred_shade(fwd.gbuffer, view.camera, state.light, sopts);
  fwd.target = composite_target(view, bg);

  auto [l1, ssim_loss] = photometric_losses(fwd.rendered, fwd.target);
  fwd.report.l_l1 = l1;
  fwd.report.l_ssim = ssim_loss;
  fwd.report.l_mask = mask_loss(fwd.gbuffer.alpha_map, view.mask);
  const bool phase_b = state.in_phase_b();
  fwd.report.l_tv = phase_b ? tv_loss(fwd.gbuffer) : 0.0;

  // SDF branch: V rays through view pixels, half biased to the foreground.
  Pcg32 pick(seed, 11);
  std::vector<int> fg;
  for (int y = 0; y < view.mask.height(); ++y)
    for (int x = 0; x < view.mask.width(); ++x)
      if (view.mask.at(x, y) > 0.5) fg.push_back(y * view.mask.width() + x);
  std::vector<Ray> rays;
  for (int v = 0; v < cfg.rays_per_batch; ++v) {
    int px, py;
    if (!fg.empty() && v % 2 == 0) {
      const int flat = fg[pick.next_below(static_cast<uint32_t>(fg.size()))];
      px = flat % view.mask.width();
      py = flat / view.mask.width();
    } else {
      px = static_cast<int>(pick.next_below(view.camera.width));
      py = static_cast<int>(pick.next_below(view.camera.height));
    }
    fwd.ray_px.push_back(px);
    fwd.ray_py.push_back(py);
    Ray ray;
    ray.origin = view.camera.camera_center();
    ray.dir = view.camera.ray_direction(px + 0.5, py + 0.5);
    rays.push_back(ray);
  }
  const int importance = std::max(0, cfg.samples_per_ray - cfg.stratified_samples);
  fwd.batch = make_ray_batch(state.grid, rays, cfg.stratified_samples, importance, pick);
  fwd.volres = volume_render(state.grid, fwd.batch);

  fwd.sdf_pixel.resize(rays.size());
  fwd.sdf_target.resize(rays.size());
  for (size_t r = 0; r < rays.size(); ++r) {
    fwd.sdf_pixel[r] = fwd.volres.color[r] + (1.0 - fwd.volres.opacity[r]) * bg;
    fwd.sdf_target[r] = fwd.target.rgb(fwd.ray_px[r], fwd.ray_py[r]);
  }
  fwd.report.l_nerf =
      nerf_loss(fwd.sdf_pixel, fwd.sdf_target, state.grid, fwd.batch, cfg.lambda_eikonal);

  if (phase_b) {
    std::vector<Vec3> gauss_normals, sdf_normals;
    for (size_t r = 0; r < rays.size(); ++r) {
      const int px = fwd.ray_px[r], py = fwd.ray_py[r];
      if (!fwd.gbuffer.surface_at(px, py)) continue;
      if (fwd.volres.opacity[r] <= 0.5) continue;
      const Vec3 gn = fwd.gbuffer.normal_map.rgb(px, py);
      const Vec3 sn = fwd.volres.normal[r];
      if (gn.squaredNorm() < 0.25 || sn.squaredNorm() < 0.25) continue;
      fwd.nd_rays.push_back(r);
      gauss_normals.push_back(gn);
      sdf_normals.push_back(sn);
    }
    fwd.report.l_nd = distillation_loss(gauss_normals, sdf_normals);
  }

  fwd.report.iteration = state.iteration;
  fwd.report.total = fwd.report.recombine(cfg);
  return fwd;
}

struct StepGradients {
  GaussianGrads gaussians;
  CubeMap d_env;
  GridGrads grid;

  StepGradients(const TrainState& state)
      : gaussians(state.cloud.count()),
        d_env(state.light.base.face_res()),
        grid(state.grid) {}
};

StepGradients backward_pass(TrainState& state, const TrainView& view, const StepForward& fwd,
                            uint64_t seed) {
  const TrainConfig& cfg = state.config;
  const Vec3 bg = state.background();
  StepGradients grads(state);
  const bool phase_b = state.in_phase_b();

  // Photometric heads -> image gradient -> shading backward.
  Image d_rendered(fwd.rendered.width(), fwd.rendered.height(), 3);
  photometric_backward(fwd.rendered, fwd.target, cfg.lambda_l1, cfg.lambda_ssim, d_rendered);

  ShadeOptions sopts;
  sopts.background = bg;
  sopts.threads = cfg.threads;
  ShadeGrads shade = deferred_shade_backward(d_rendered, fwd.gbuffer, view.camera,
                                             state.light, sopts);

  mask_loss_backward(fwd.gbuffer.alpha_map, view.mask, cfg.lambda_mask, shade.d_alpha);

  GBufferGrads gb_grads;
  gb_grads.d_albedo = std::move(shade.d_albedo);
  gb_grads.d_roughness = std::move(shade.d_roughness);
  gb_grads.d_specular = std::move(shade.d_specular);
  gb_grads.d_alpha = std::move(shade.d_alpha);
  if (phase_b && cfg.lambda_tv > 0.0) tv_loss_backward(fwd.gbuffer, cfg.lambda_tv, gb_grads);

  // Distillation: both sides. The Gaussian side lands on the unit normal map
  // ahead of the renormalization chain; the SDF side on the ray normals.
  std::vector<Vec3> d_sdf_normal_raw(fwd.batch.ray_count(), Vec3::Zero());
  if (phase_b && !fwd.nd_rays.empty()) {
    for (const size_t r : fwd.nd_rays) {
      const int px = fwd.ray_px[r], py = fwd.ray_py[r];
      const Vec3 gn = fwd.gbuffer.normal_map.rgb(px, py);
      const Vec3 sn = fwd.volres.normal[r];
      const double sign = (1.0 - gn.dot(sn)) >= 0.0 ? 1.0 : -1.0;
      // d|1 - gn.sn| -> -sign * counterpart.
      const Vec3 d_gn = -cfg.lambda_nd * sign * sn;
      for (int c = 0; c < 3; ++c) shade.d_normal_unit.at(px, py, c) += d_gn[c];

      const Vec3 d_sn_unit = -cfg.lambda_nd * sign * gn;
      const Vec3 raw = fwd.volres.normal_raw[r];
      const double len = raw.norm();
      if (len > 1e-12)
        d_sdf_normal_raw[r] += (d_sn_unit - sn * sn.dot(d_sn_unit)) / len;
    }
  }

  gb_grads.d_normal_raw = normal_renorm_backward(fwd.gbuffer, shade.d_normal_unit);

  RasterizeOptions ropts;
  ropts.threads = cfg.threads;
  grads.gaussians =
      composite_backward(gb_grads, fwd.projected, state.cloud, view.camera, ropts);

  // Environment chain: shading -> split-sum products -> base texels.
  const PrecomputeOptions popts = train_precompute_options(state, seed);
  irradiance_backward(shade.d_irradiance, state.light.base, popts, grads.d_env);
  prefilter_backward(shade.d_prefiltered, state.light.base, popts, grads.d_env);

  // SDF branch: color term of l_nerf plus Eikonal plus distillation.
  const size_t n_rays = fwd.batch.ray_count();
  std::vector<Vec3> d_color(n_rays, Vec3::Zero());
  std::vector<double> d_opacity(n_rays, 0.0);
  const double color_w = n_rays ? 1.0 / (3.0 * n_rays) : 0.0;
  for (size_t r = 0; r < n_rays; ++r) {
    Vec3 sign = Vec3::Zero();
    for (int c = 0; c < 3; ++c) {
      const double diff = fwd.sdf_pixel[r][c] - fwd.sdf_target[r][c];
      sign[c] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    }
    d_color[r] = color_w * sign;
    d_opacity[r] = -color_w * sign.dot(bg);
  }
  volume_render_backward(state.grid, fwd.batch, d_color, d_sdf_normal_raw, d_opacity,
                         grads.grid);
  eikonal_backward(state.grid, fwd.batch, cfg.lambda_eikonal, grads.grid.d_values);
  return grads;
}

// Gathers strided member scalars into a flat buffer, steps, writes back.
template <typename Load, typename Store>
void step_group(Adam& adam, size_t n, double lr, Load&& load, Store&& store) {
  if (n == 0 || lr <= 0.0) return;
  std::vector<double> params(n), grads(n);
  for (size_t i = 0; i < n; ++i) {
    auto [p, g] = load(i);
    params[i] = p;
    grads[i] = g;
  }
  adam.step(params.data(), grads.data(), n, lr);
  for (size_t i = 0; i < n; ++i) store(i, params[i]);
}

void apply_updates(TrainState& state, const StepGradients& grads, double lr_scale) {
  const TrainConfig& cfg = state.config;
  GaussianCloud& cloud = state.cloud;
  const size_t n = cloud.count();

  step_group(
      state.adam_diffuse, 3 * n, cfg.lr_diffuse * lr_scale,
      [&](size_t i) {
        return std::pair{cloud[i / 3].diffuse_albedo[i % 3],
                         grads.gaussians.d_diffuse_albedo[i / 3][i % 3]};
      },
      [&](size_t i, double v) { cloud[i / 3].diffuse_albedo[i % 3] = v; });
  step_group(
      state.adam_specular, 3 * n, cfg.lr_specular * lr_scale,
      [&](size_t i) {
        return std::pair{cloud[i / 3].specular_albedo[i % 3],
                         grads.gaussians.d_specular_albedo[i / 3][i % 3]};
      },
      [&](size_t i, double v) { cloud[i / 3].specular_albedo[i % 3] = v; });
  step_group(
      state.adam_roughness, n, cfg.lr_roughness * lr_scale,
      [&](size_t i) { return std::pair{cloud[i].roughness, grads.gaussians.d_roughness[i]}; },
      [&](size_t i, double v) { cloud[i].roughness = v; });
  step_group(
      state.adam_normal, 3 * n, cfg.lr_normal * lr_scale,
      [&](size_t i) {
        return std::pair{cloud[i / 3].normal[i % 3], grads.gaussians.d_normal[i / 3][i % 3]};
      },
      [&](size_t i, double v) { cloud[i / 3].normal[i % 3] = v; });
  step_group(
      state.adam_opacity, n, cfg.lr_opacity * lr_scale,
      [&](size_t i) {
        return std::pair{cloud[i].opacity_logit, grads.gaussians.d_opacity_logit[i]};
      },
      [&](size_t i, double v) { cloud[i].opacity_logit = v; });

  const size_t env_n = 3 * state.light.base.texel_count();
  step_group(
      state.adam_env, env_n, cfg.lr_environment * lr_scale,
      [&](size_t i) {
        return std::pair{state.light.base.texels()[i / 3][i % 3],
                         grads.d_env.texels()[i / 3][i % 3]};
      },
      [&](size_t i, double v) {
        state.light.base.texels()[i / 3][i % 3] = clamped(v, 0.0, kRadianceClamp);
      });

  SdfGrid& grid = state.grid;
  const size_t gv = grid.vertex_count();
  step_group(
      state.adam_sdf_values, gv, cfg.lr_sdf * lr_scale,
      [&](size_t i) { return std::pair{grid.values[i], grads.grid.d_values[i]}; },
      [&](size_t i, double v) { grid.values[i] = v; });
  step_group(
      state.adam_sdf_diffuse, 3 * gv, cfg.lr_sdf_color * lr_scale,
      [&](size_t i) {
        return std::pair{grid.diffuse[i / 3][i % 3], grads.grid.d_diffuse[i / 3][i % 3]};
      },
      [&](size_t i, double v) { grid.diffuse[i / 3][i % 3] = v; });
  step_group(
      state.adam_sdf_tint, gv, cfg.lr_sdf_color * lr_scale,
      [&](size_t i) { return std::pair{grid.tint[i], grads.grid.d_tint[i]}; },
      [&](size_t i, double v) { grid.tint[i] = v; });
  step_group(
      state.adam_sdf_sh, 27, cfg.lr_sdf_color * lr_scale,
      [&](size_t i) {
        return std::pair{grid.view_sh[i / 3][i % 3], grads.grid.d_view_sh[i / 3][i % 3]};
      },
      [&](size_t i, double v) { grid.view_sh[i / 3][i % 3] = v; });
  step_group(
      state.adam_deviation, 1, cfg.lr_deviation * lr_scale,
      [&](size_t) { return std::pair{grid.log_deviation, grads.grid.d_log_deviation}; },
      [&](size_t, double v) { grid.log_deviation = v; });

  for (Gaussian& g : cloud.gaussians) g.renormalize();
  grid.clamp_invariants();
  state.light.mark_dirty();
}

void reset_per_splat_optimizers(TrainState& state) {
  const size_t n = state.cloud.count();
  state.adam_diffuse.resize(3 * n);
  state.adam_specular.resize(3 * n);
  state.adam_roughness.resize(n);
  state.adam_normal.resize(3 * n);
  state.adam_opacity.resize(n);
  state.densify_accum.assign(n, 0.0);
  state.densify_count.assign(n, 0);
}

void check_finite(const LossReport& report) {
  const auto bad = [](double v) { return !std::isfinite(v); };
  const char* term = nullptr;
  if (bad(report.l_nerf)) term = "l_nerf";
  else if (bad(report.l_nd)) term = "l_nd";
  else if (bad(report.l_l1)) term = "l_l1";
  else if (bad(report.l_ssim)) term = "l_ssim";
  else if (bad(report.l_mask)) term = "l_mask";
  else if (bad(report.l_tv)) term = "l_tv";
  else if (bad(report.total)) term = "total";
  if (term)
    throw NumericalError(std::string("non-finite loss term ") + term + " at iteration " +
                         std::to_string(report.iteration));
}

}  // namespace

TrainState make_train_state(const TrainConfig& config, const Vec3& bounds_min,
                            const Vec3& bounds_max) {
  if (!config.valid()) throw ConsistencyError("train config violates invariants");
  TrainState state;
  state.config = config;
  state.rng = Pcg32(config.seed, 5);

  const Vec3 center = 0.5 * (bounds_min + bounds_max);
  const Vec3 half = 0.5 * (bounds_max - bounds_min);
  const double spacing =
      (2.0 * half.minCoeff()) * std::cbrt(1.0 / std::max(1, config.init_gaussians));
  state.cloud.gaussians.reserve(config.init_gaussians);
  for (int i = 0; i < config.init_gaussians; ++i) {
    Gaussian g;
    g.position = center + Vec3(state.rng.uniform(-0.8, 0.8) * half.x(),
                               state.rng.uniform(-0.8, 0.8) * half.y(),
                               state.rng.uniform(-0.8, 0.8) * half.z());
    g.normal = Vec3(state.rng.uniform(-1, 1), state.rng.uniform(-1, 1),
                    state.rng.uniform(-1, 1)).normalized();
    g.log_scale = Vec3::Constant(std::log(std::max(spacing, 1e-4)));
    g.opacity_logit = logit(0.1);
    state.cloud.gaussians.push_back(g);
  }

  state.light = EnvironmentLight(CubeMap(config.train_env_res, Vec3::Ones()));
  state.grid = SdfGrid::make_sphere(Eigen::Vector3i::Constant(config.grid_cells), bounds_min,
                                    bounds_max);
  reset_per_splat_optimizers(state);
  return state;
}

void reseed_cloud_from_sdf(TrainState& state, int count) {
  TriangleMesh mesh;
  try {
    mesh = extract_mesh(state.grid);
  } catch (const EmptyMeshError&) {
    return;  // no surface yet; keep the current cloud
  }
  std::vector<double> cumulative(mesh.triangle_count());
  double total = 0.0;
  for (size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles[t];
    total += 0.5 * (mesh.vertices[tri[1]] - mesh.vertices[tri[0]])
                       .cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]])
                       .norm();
    cumulative[t] = total;
  }
  if (total <= 0.0) return;

  const double spacing = std::sqrt(total / std::max(1, count));
  GaussianCloud cloud;
  cloud.gaussians.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double u = state.rng.next_double() * total;
    const size_t t =
        std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin();
    const auto& tri = mesh.triangles[std::min(t, mesh.triangle_count() - 1)];
    double b0 = state.rng.next_double(), b1 = state.rng.next_double();
    if (b0 + b1 > 1.0) {
      b0 = 1.0 - b0;
      b1 = 1.0 - b1;
    }
    const Vec3 p = mesh.vertices[tri[0]] +
                   b0 * (mesh.vertices[tri[1]] - mesh.vertices[tri[0]]) +
                   b1 * (mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
    Gaussian g;
    g.position = p;
    const Vec3 grad = state.grid.gradient(p);
    g.normal = grad.norm() > 1e-9 ? Vec3(grad.normalized()) : Vec3::UnitZ();
    g.rotation = Quat::FromTwoVectors(Vec3::UnitZ(), g.normal);
    // Surfel-style: tangent extent near the sampling spacing, thin in normal.
    g.log_scale = Vec3(std::log(0.6 * spacing), std::log(0.6 * spacing),
                       std::log(0.15 * spacing));
    g.opacity_logit = logit(0.8);
    g.diffuse_albedo = state.grid.sample_diffuse(p).cwiseMax(0.0).cwiseMin(1.0);
    g.roughness = 0.5;
    g.specular_albedo = Vec3::Constant(0.04);
    cloud.gaussians.push_back(g);
  }
  state.cloud = std::move(cloud);
  reset_per_splat_optimizers(state);
}

DensifyResult densify_and_prune(const GaussianCloud& cloud,
                                const std::vector<double>& grad_magnitude,
                                const DensifyOptions& opts, Pcg32& rng) {
  DensifyResult result;
  const auto gaussian01 = [&rng]() {
    // Box-Muller.
    const double u1 = std::max(rng.next_double(), 1e-12);
    const double u2 = rng.next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  };
  for (size_t i = 0; i < cloud.count(); ++i) {
    const Gaussian& g = cloud[i];
    if (g.opacity() < opts.prune_opacity) continue;  // prune

    const double grad = i < grad_magnitude.size() ? grad_magnitude[i] : 0.0;
    if (grad < opts.grad_threshold) {
      result.cloud.gaussians.push_back(g);
      result.parents.push_back(static_cast<int>(i));
      continue;
    }
    const Vec3 scale = g.scale();
    const Mat3 rot = g.rotation.toRotationMatrix();
    if (scale.maxCoeff() > opts.split_scale) {
      // Split: two shrunken children around the parent.
      for (int child = 0; child < 2; ++child) {
        Gaussian c = g;
        const Vec3 local(scale.x() * gaussian01(), scale.y() * gaussian01(),
                         scale.z() * gaussian01());
        c.position = g.position + rot * local;
        c.log_scale = g.log_scale - Vec3::Constant(std::log(opts.scale_shrink));
        result.cloud.gaussians.push_back(c);
        result.parents.push_back(static_cast<int>(i));
      }
    } else {
      // Clone: keep the parent, add a jittered copy.
      result.cloud.gaussians.push_back(g);
      result.parents.push_back(static_cast<int>(i));
      Gaussian c = g;
      const Vec3 local(scale.x() * gaussian01(), scale.y() * gaussian01(),
                       scale.z() * gaussian01());
      c.position = g.position + opts.clone_jitter * (rot * local);
      result.cloud.gaussians.push_back(c);
      result.parents.push_back(static_cast<int>(i));
    }
  }
  return result;
}

LossReport train_step(TrainState& state, const TrainView& view) {
  const TrainConfig& cfg = state.config;
  const int phase_b_start = static_cast<int>(cfg.phase_a_fraction * cfg.iterations);
  if (cfg.reseed_at_phase_b && state.iteration == phase_b_start && phase_b_start > 0)
    reseed_cloud_from_sdf(state, cfg.init_gaussians);

  const uint64_t seed = step_seed(cfg, state.iteration);
  StepForward fwd = forward_pass(state, view, seed);
  check_finite(fwd.report);

  const StepGradients grads = backward_pass(state, view, fwd, seed);

  double lr_scale = 1.0;
  if (cfg.lr_decay > 0.0 && cfg.lr_decay != 1.0 && cfg.iterations > 1)
    lr_scale = std::pow(cfg.lr_decay,
                        static_cast<double>(state.iteration) / (cfg.iterations - 1));
  apply_updates(state, grads, lr_scale);

  // Densification bookkeeping on the opacity-gradient magnitude.
  if (state.densify_accum.size() != state.cloud.count())
    reset_per_splat_optimizers(state);
  for (size_t i = 0; i < state.cloud.count(); ++i) {
    state.densify_accum[i] += std::abs(grads.gaussians.d_opacity_logit[i]);
    state.densify_count[i] += 1;
  }
  if (state.iteration >= cfg.densify_from && state.iteration < cfg.densify_until &&
      cfg.densify_interval > 0 && (state.iteration + 1) % cfg.densify_interval == 0) {
    std::vector<double> mean_grad(state.cloud.count(), 0.0);
    for (size_t i = 0; i < state.cloud.count(); ++i)
      if (state.densify_count[i] > 0)
        mean_grad[i] = state.densify_accum[i] / state.densify_count[i];
    DensifyOptions dopts;
    dopts.prune_opacity = cfg.prune_opacity;
    dopts.grad_threshold = cfg.densify_grad_threshold;
    DensifyResult dens = densify_and_prune(state.cloud, mean_grad, dopts, state.rng);
    state.cloud = std::move(dens.cloud);
    const size_t n = state.cloud.count();
    state.adam_diffuse.remap(dens.parents, n, 3);
    state.adam_specular.remap(dens.parents, n, 3);
    state.adam_roughness.remap(dens.parents, n, 1);
    state.adam_normal.remap(dens.parents, n, 3);
    state.adam_opacity.remap(dens.parents, n, 1);
    state.densify_accum.assign(n, 0.0);
    state.densify_count.assign(n, 0);
  }

  state.history.push_back(fwd.report);
  ++state.iteration;
  return fwd.report;
}

double gradient_check(TrainState& state, const TrainView& view, ParamGroup group, double h,
                      int max_probes) {
  const uint64_t seed = hash_mix(state.config.seed ^ 0xABCDEF1234ULL);
  const StepForward fwd = forward_pass(state, view, seed);
  const StepGradients grads = backward_pass(state, view, fwd, seed);

  const auto loss = [&]() { return forward_pass(state, view, seed).report.total; };
  double worst = 0.0;
  const auto probe = [&](double* param, double analytic) {
    const double saved = *param;
    *param = saved + h;
    const double up = loss();
    *param = saved - h;
    const double down = loss();
    *param = saved;
    const double fd = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-5});
    worst = std::max(worst, std::abs(fd - analytic) / denom);
  };

  GaussianCloud& cloud = state.cloud;
  Pcg32 pick(987);
  switch (group) {
    case ParamGroup::kDiffuse:
      for (size_t i = 0; i < cloud.count(); ++i)
        for (int c = 0; c < 3; ++c)
          probe(&cloud[i].diffuse_albedo[c], grads.gaussians.d_diffuse_albedo[i][c]);
      break;
    case ParamGroup::kRoughness:
      for (size_t i = 0; i < cloud.count(); ++i)
        probe(&cloud[i].roughness, grads.gaussians.d_roughness[i]);
      break;
    case ParamGroup::kSpecular:
      for (size_t i = 0; i < cloud.count(); ++i)
        for (int c = 0; c < 3; ++c)
          probe(&cloud[i].specular_albedo[c], grads.gaussians.d_specular_albedo[i][c]);
      break;
    case ParamGroup::kNormal:
      for (size_t i = 0; i < cloud.count(); ++i)
        for (int c = 0; c < 3; ++c) probe(&cloud[i].normal[c], grads.gaussians.d_normal[i][c]);
      break;
    case ParamGroup::kOpacity:
      for (size_t i = 0; i < cloud.count(); ++i)
        probe(&cloud[i].opacity_logit, grads.gaussians.d_opacity_logit[i]);
      break;
    case ParamGroup::kEnvironment: {
      const int probes = max_probes > 0 ? max_probes : 16;
      for (int k = 0; k < probes; ++k) {
        const size_t t = pick.next_below(static_cast<uint32_t>(state.light.base.texel_count()));
        const int c = pick.next_below(3);
        probe(&state.light.base.texels()[t][c], grads.d_env.texels()[t][c]);
      }
      break;
    }
  }
  return worst;
}

void save_checkpoint(const TrainState& state, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path base(dir);
  save_scene(state.cloud, state.light, (base / "scene.dgs").string());
  save_grid(state.grid, (base / "sdf.grid").string());
  write_pfm((base / "env.pfm").string(),
            cubemap_to_equirect(state.light.base, 2 * state.light.base.face_res()));

  std::ofstream opt(base / "optimizer.state", std::ios::binary);
  if (!opt) throw FormatError("cannot write optimizer state");
  const int64_t iter = state.iteration;
  opt.write(reinterpret_cast<const char*>(&iter), sizeof(iter));
  for (const Adam* a :
       {&state.adam_diffuse, &state.adam_specular, &state.adam_roughness, &state.adam_normal,
        &state.adam_opacity, &state.adam_env, &state.adam_sdf_values, &state.adam_sdf_diffuse,
        &state.adam_sdf_tint, &state.adam_sdf_sh, &state.adam_deviation})
    a->save(opt);

  std::ofstream csv(base / "report.csv");
  csv << "iteration,total,l_nerf,l_nd,l_l1,l_ssim,l_mask,l_tv\n";
  for (const LossReport& r : state.history)
    csv << r.iteration << "," << r.total << "," << r.l_nerf << "," << r.l_nd << "," << r.l_l1
        << "," << r.l_ssim << "," << r.l_mask << "," << r.l_tv << "\n";
}

}  // namespace dgs
