// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/sdf/neus.hpp"

#include <algorithm>

namespace dgs {

double neus_alpha(double f_i, double f_next, double s) {
  const double a = sigmoid(s * f_i);
  const double b = sigmoid(s * f_next);
  const double alpha = std::max((a - b) / std::max(a, 1e-12), 0.0);
  return std::min(alpha, 1.0 - 1e-12);  // keep the open upper bound numerically
}

double neus_alpha_with_grads(double f_i, double f_next, double s, NeusAlphaGrads& grads) {
  const double a = sigmoid(s * f_i);
  const double b = sigmoid(s * f_next);
  grads = NeusAlphaGrads{};
  if (b >= a) return 0.0;  // clamped branch
  const double alpha = (a - b) / a;
  if (alpha >= 1.0 - 1e-12) return 1.0 - 1e-12;  // saturated: flat
  // alpha = 1 - b/a.
  grads.d_f_i = s * b * (1.0 - a) / a;
  grads.d_f_next = -s * b * (1.0 - b) / a;
  grads.d_s = (b / a) * (f_i * (1.0 - a) - f_next * (1.0 - b));
  return alpha;
}

namespace {

bool ray_box_range(const Ray& ray, const Vec3& lo, const Vec3& hi, double& t0, double& t1) {
  t0 = 1e-4;
  t1 = 1e12;
  for (int a = 0; a < 3; ++a) {
    const double inv = 1.0 / ray.dir[a];
    double ta = (lo[a] - ray.origin[a]) * inv;
    double tb = (hi[a] - ray.origin[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t0 < t1;
}

}  // namespace

RaySampleBatch make_ray_batch(const SdfGrid& grid, const std::vector<Ray>& rays,
                              int stratified, int importance, Pcg32& rng) {
  RaySampleBatch batch;
  batch.rays = rays;
  batch.samples_per_ray = stratified + importance;
  batch.depths.resize(rays.size() * batch.samples_per_ray);
  const double s = grid.deviation();

  for (size_t r = 0; r < rays.size(); ++r) {
    double t0, t1;
    if (!ray_box_range(rays[r], grid.bounds_min, grid.bounds_max, t0, t1)) {
      // Missing the volume entirely: park the samples on a unit span so the
      // batch invariants still hold; everything evaluates to empty space.
      t0 = 1e-4;
      t1 = 1.0;
    }
    std::vector<double> depths;
    depths.reserve(batch.samples_per_ray);
    const double span = (t1 - t0) / stratified;
    for (int i = 0; i < stratified; ++i)
      depths.push_back(t0 + span * (i + rng.next_double()));

    if (importance > 0) {
      // Coarse alpha pass over the stratified depths guides extra samples.
      std::vector<double> weights(stratified, 1e-6);
      double transmittance = 1.0;
      double f_prev = grid.sample(rays[r].origin + depths[0] * rays[r].dir);
      for (int i = 0; i + 1 < stratified; ++i) {
        const double f_next = grid.sample(rays[r].origin + depths[i + 1] * rays[r].dir);
        const double alpha = neus_alpha(f_prev, f_next, s);
        weights[i] += alpha * transmittance;
        transmittance *= 1.0 - alpha;
        f_prev = f_next;
      }
      double total = 0.0;
      for (const double w : weights) total += w;
      for (int i = 0; i < importance; ++i) {
        double u = rng.next_double() * total;
        int seg = 0;
        while (seg + 1 < stratified && u > weights[seg]) {
          u -= weights[seg];
          ++seg;
        }
        const double lo = depths[seg];
        const double hi = seg + 1 < stratified ? depths[seg + 1] : t1;
        depths.push_back(lo + (hi - lo) * rng.next_double());
      }
    }

    std::sort(depths.begin(), depths.end());
    // Enforce strictly increasing depths.
    for (size_t i = 1; i < depths.size(); ++i)
      if (depths[i] <= depths[i - 1]) depths[i] = depths[i - 1] + 1e-9;
    std::copy(depths.begin(), depths.end(), batch.depths.begin() + r * batch.samples_per_ray);
  }
  return batch;
}

VolumeRenderResult volume_render(const SdfGrid& grid, const RaySampleBatch& batch) {
  VolumeRenderResult out;
  const size_t n = batch.ray_count();
  out.color.assign(n, Vec3::Zero());
  out.normal.assign(n, Vec3::Zero());
  out.normal_raw.assign(n, Vec3::Zero());
  out.opacity.assign(n, 0.0);
  const double s = grid.deviation();
  const int m = batch.samples_per_ray;

  for (size_t r = 0; r < n; ++r) {
    const Vec3 view_light = grid.view_lighting(batch.rays[r].dir);
    double transmittance = 1.0;
    double f_prev = grid.sample(batch.position(r, 0));
    for (int i = 0; i + 1 < m; ++i) {
      const double f_next = grid.sample(batch.position(r, i + 1));
      const double alpha = neus_alpha(f_prev, f_next, s);
      f_prev = f_next;
      if (alpha > 0.0) {
        const Vec3 x = batch.position(r, i);
        const Vec3 c = grid.sample_diffuse(x) + grid.sample_tint(x) * view_light;
        const Vec3 g = grid.gradient(x);
        const double glen = g.norm();
        const Vec3 normal = glen > 1e-12 ? Vec3(g / glen) : Vec3::Zero();
        const double w = alpha * transmittance;
        out.color[r] += w * c;
        out.normal_raw[r] += w * normal;
        out.opacity[r] += w;
        transmittance *= 1.0 - alpha;
        if (transmittance < 1e-5) break;
      }
    }
    const double raw_len = out.normal_raw[r].norm();
    if (raw_len > 1e-12 && out.opacity[r] > 0.0) out.normal[r] = out.normal_raw[r] / raw_len;
  }
  return out;
}

void volume_render_backward(const SdfGrid& grid, const RaySampleBatch& batch,
                            const std::vector<Vec3>& d_color,
                            const std::vector<Vec3>& d_normal_raw,
                            const std::vector<double>& d_opacity, GridGrads& grads) {
  const double s = grid.deviation();
  const int m = batch.samples_per_ray;
  const size_t n = batch.ray_count();

  struct SampleState {
    int index;
    double alpha, transmittance;
    NeusAlphaGrads alpha_grads;
    Vec3 color, normal;
  };
  std::vector<SampleState> stack;

  for (size_t r = 0; r < n; ++r) {
    const Vec3 dc = d_color.empty() ? Vec3::Zero() : d_color[r];
    const Vec3 dn = d_normal_raw.empty() ? Vec3::Zero() : d_normal_raw[r];
    const double dop = d_opacity.empty() ? 0.0 : d_opacity[r];
    if (dc.isZero(0.0) && dn.isZero(0.0) && dop == 0.0) continue;

    const Vec3 view_light = grid.view_lighting(batch.rays[r].dir);
    const std::array<double, 9> basis = sh2_basis(batch.rays[r].dir);

    // Forward replay.
    stack.clear();
    double transmittance = 1.0;
    double f_prev = grid.sample(batch.position(r, 0));
    for (int i = 0; i + 1 < m; ++i) {
      const double f_next = grid.sample(batch.position(r, i + 1));
      NeusAlphaGrads ag;
      const double alpha = neus_alpha_with_grads(f_prev, f_next, s, ag);
      f_prev = f_next;
      if (alpha > 0.0) {
        const Vec3 x = batch.position(r, i);
        const Vec3 g = grid.gradient(x);
        const double glen = g.norm();
        SampleState st;
        st.index = i;
        st.alpha = alpha;
        st.transmittance = transmittance;
        st.alpha_grads = ag;
        st.color = grid.sample_diffuse(x) + grid.sample_tint(x) * view_light;
        st.normal = glen > 1e-12 ? Vec3(g / glen) : Vec3::Zero();
        stack.push_back(st);
        transmittance *= 1.0 - alpha;
        if (transmittance < 1e-5) break;
      }
    }
    if (stack.empty()) continue;

    // Reverse sweep with suffix sums (same structure as the splat compositor).
    Vec3 suffix_color = Vec3::Zero(), suffix_normal = Vec3::Zero();
    double suffix_alpha = 0.0;
    for (size_t k = stack.size(); k-- > 0;) {
      const SampleState& st = stack[k];
      const double w = st.alpha * st.transmittance;
      const Vec3 x = batch.position(r, st.index);

      // Attribute heads.
      if (!dc.isZero(0.0)) {
        grid.splat_diffuse(x, w * dc, grads.d_diffuse);
        const double p = grid.sample_tint(x);
        grid.splat_tint(x, w * dc.dot(view_light), grads.d_tint);
        for (int b = 0; b < 9; ++b) grads.d_view_sh[b] += w * p * basis[b] * dc;
      }
      if (!dn.isZero(0.0) && st.normal.squaredNorm() > 0.0) {
        const Vec3 g = grid.gradient(x);
        const double glen = g.norm();
        const Vec3 d_normal_sample = w * dn;
        const Vec3 d_g =
            (d_normal_sample - st.normal * st.normal.dot(d_normal_sample)) / glen;
        grid.splat_gradient(x, d_g, grads.d_values);
      }

      // Alpha gradient through this term and everything behind it.
      double d_alpha = dc.dot(st.color * st.transmittance - suffix_color / (1.0 - st.alpha));
      d_alpha += dn.dot(st.normal * st.transmittance - suffix_normal / (1.0 - st.alpha));
      d_alpha += dop * (st.transmittance - suffix_alpha / (1.0 - st.alpha));

      grid.splat_value(batch.position(r, st.index), d_alpha * st.alpha_grads.d_f_i,
                       grads.d_values);
      grid.splat_value(batch.position(r, st.index + 1), d_alpha * st.alpha_grads.d_f_next,
                       grads.d_values);
      grads.d_log_deviation += d_alpha * st.alpha_grads.d_s * s;

      suffix_color += st.color * w;
      suffix_normal += st.normal * w;
      suffix_alpha += w;
    }
  }
}

double nerf_loss(const std::vector<Vec3>& rendered, const std::vector<Vec3>& target,
                 const SdfGrid& grid, const RaySampleBatch& batch, double lambda_eikonal) {
  if (rendered.size() != target.size() || rendered.size() != batch.ray_count())
    throw ConsistencyError("nerf_loss inputs disagree on ray count");
  double color = 0.0;
  for (size_t r = 0; r < rendered.size(); ++r)
    color += (rendered[r] - target[r]).cwiseAbs().sum();
  if (!rendered.empty()) color /= 3.0 * rendered.size();
  return color + lambda_eikonal * eikonal_term(grid, batch);
}

double eikonal_term(const SdfGrid& grid, const RaySampleBatch& batch) {
  double sum = 0.0;
  for (size_t r = 0; r < batch.ray_count(); ++r)
    for (int i = 0; i < batch.samples_per_ray; ++i)
      sum += sqr(grid.gradient(batch.position(r, i)).norm() - 1.0);
  return sum;
}

void eikonal_backward(const SdfGrid& grid, const RaySampleBatch& batch, double d_term,
                      std::vector<double>& d_values) {
  for (size_t r = 0; r < batch.ray_count(); ++r)
    for (int i = 0; i < batch.samples_per_ray; ++i) {
      const Vec3 x = batch.position(r, i);
      const Vec3 g = grid.gradient(x);
      const double glen = g.norm();
      if (glen < 1e-12) continue;
      grid.splat_gradient(x, (d_term * 2.0 * (glen - 1.0) / glen) * g, d_values);
    }
}

double distillation_loss(const std::vector<Vec3>& gaussian_normals,
                         const std::vector<Vec3>& sdf_normals) {
  if (gaussian_normals.size() != sdf_normals.size())
    throw ConsistencyError("distillation_loss dimension mismatch");
  double sum = 0.0;
  for (size_t i = 0; i < gaussian_normals.size(); ++i)
    sum += std::abs(1.0 - gaussian_normals[i].dot(sdf_normals[i]));
  return sum;
}

void distillation_backward(const std::vector<Vec3>& gaussian_normals,
                           const std::vector<Vec3>& sdf_normals, double d_loss,
                           std::vector<Vec3>& d_gaussian, std::vector<Vec3>& d_sdf) {
  for (size_t i = 0; i < gaussian_normals.size(); ++i) {
    const double sign = 1.0 - gaussian_normals[i].dot(sdf_normals[i]) >= 0.0 ? 1.0 : -1.0;
    d_gaussian[i] += -d_loss * sign * sdf_normals[i];
    d_sdf[i] += -d_loss * sign * gaussian_normals[i];
  }
}

}  // namespace dgs
