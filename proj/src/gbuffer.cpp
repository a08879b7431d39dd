// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/raster/gbuffer.hpp"

#include <filesystem>
#include <memory>

#include "dgs/core/image_io.hpp"
#include "dgs/core/parallel.hpp"

namespace dgs {

namespace {

// Fused channel layout shared by forward and backward.
constexpr int kChKd = 0;     // 3
constexpr int kChKs = 3;     // 3
constexpr int kChRough = 6;  // 1
constexpr int kChNormal = 7; // 3
constexpr int kChPos = 10;   // 3
constexpr int kChDepth = 13; // 1
constexpr int kChannels = 14;
constexpr int kGradChannels = 10;  // kd, ks, rough, normal carry gradients

std::vector<double> gather_attributes(const std::vector<ProjectedGaussian>& projected,
                                      const GaussianCloud& cloud, int channels) {
  std::vector<double> attrs(projected.size() * channels, 0.0);
  for (size_t i = 0; i < projected.size(); ++i) {
    const Gaussian& g = cloud[projected[i].source_index];
    double* a = &attrs[i * channels];
    a[kChKd + 0] = g.diffuse_albedo.x();
    a[kChKd + 1] = g.diffuse_albedo.y();
    a[kChKd + 2] = g.diffuse_albedo.z();
    a[kChKs + 0] = g.specular_albedo.x();
    a[kChKs + 1] = g.specular_albedo.y();
    a[kChKs + 2] = g.specular_albedo.z();
    a[kChRough] = g.roughness;
    a[kChNormal + 0] = g.normal.x();
    a[kChNormal + 1] = g.normal.y();
    a[kChNormal + 2] = g.normal.z();
    if (channels > kChPos) {
      a[kChPos + 0] = g.position.x();
      a[kChPos + 1] = g.position.y();
      a[kChPos + 2] = g.position.z();
      a[kChDepth] = projected[i].depth;
    }
  }
  return attrs;
}

}  // namespace

GBuffer render_gbuffer(const GaussianCloud& cloud, const Camera& cam,
                       const RasterizeOptions& opts) {
  return render_gbuffer(project(cloud, cam, opts.threads), cloud, cam, opts);
}

GBuffer render_gbuffer(const std::vector<ProjectedGaussian>& projected,
                       const GaussianCloud& cloud, const Camera& cam,
                       const RasterizeOptions& opts) {
  GBuffer gb;
  gb.width = cam.width;
  gb.height = cam.height;
  gb.position_map = Image(cam.width, cam.height, 3);
  gb.normal_map = Image(cam.width, cam.height, 3);
  gb.normal_raw = Image(cam.width, cam.height, 3);
  gb.albedo_map = Image(cam.width, cam.height, 3);
  gb.roughness_map = Image(cam.width, cam.height, 1);
  gb.specular_map = Image(cam.width, cam.height, 3);
  gb.alpha_map = Image(cam.width, cam.height, 1);
  gb.depth_map = Image(cam.width, cam.height, 1);

  std::vector<double> attrs(projected.size() * kChannels);
  parallel_for(static_cast<int64_t>(projected.size()), opts.threads,
               [&](int64_t begin, int64_t end, int) {
    for (int64_t i = begin; i < end; ++i) {
      const Gaussian& g = cloud[projected[i].source_index];
      double* a = &attrs[i * kChannels];
      a[kChKd + 0] = g.diffuse_albedo.x();
      a[kChKd + 1] = g.diffuse_albedo.y();
      a[kChKd + 2] = g.diffuse_albedo.z();
      a[kChKs + 0] = g.specular_albedo.x();
      a[kChKs + 1] = g.specular_albedo.y();
      a[kChKs + 2] = g.specular_albedo.z();
      a[kChRough] = g.roughness;
      a[kChNormal + 0] = g.normal.x();
      a[kChNormal + 1] = g.normal.y();
      a[kChNormal + 2] = g.normal.z();
      a[kChPos + 0] = g.position.x();
      a[kChPos + 1] = g.position.y();
      a[kChPos + 2] = g.position.z();
      a[kChDepth] = projected[i].depth;
    }
  });

  // The engine initializes every output sample, so skip the zero-fill here.
  const size_t fused_count = static_cast<size_t>(cam.width) * cam.height * kChannels;
  auto fused = std::make_unique_for_overwrite<double[]>(fused_count);
  composite_forward_engine(projected, attrs.data(), kChannels, cam.width, cam.height, opts,
                           fused.get(), gb.alpha_map.data().data());

  parallel_for(cam.height, opts.threads, [&](int64_t y0, int64_t y1, int) {
    for (int y = static_cast<int>(y0); y < y1; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        const double* f = fused.get() + (static_cast<size_t>(y) * cam.width + x) * kChannels;
        gb.albedo_map.set_rgb(x, y, Vec3(f[kChKd], f[kChKd + 1], f[kChKd + 2]));
        gb.specular_map.set_rgb(x, y, Vec3(f[kChKs], f[kChKs + 1], f[kChKs + 2]));
        gb.roughness_map.at(x, y) = f[kChRough];
        const Vec3 n_raw(f[kChNormal], f[kChNormal + 1], f[kChNormal + 2]);
        gb.normal_raw.set_rgb(x, y, n_raw);
        gb.position_map.set_rgb(x, y, Vec3(f[kChPos], f[kChPos + 1], f[kChPos + 2]));
        gb.depth_map.at(x, y) = f[kChDepth];
        if (gb.alpha_map.at(x, y) > kSurfaceAlpha && n_raw.norm() > 1e-12)
          gb.normal_map.set_rgb(x, y, n_raw.normalized());
        else
          gb.normal_map.set_rgb(x, y, Vec3::Zero());
      }
    }
  });
  return gb;
}

void GaussianGrads::accumulate(const GaussianGrads& other) {
  for (size_t i = 0; i < d_diffuse_albedo.size(); ++i) {
    d_diffuse_albedo[i] += other.d_diffuse_albedo[i];
    d_roughness[i] += other.d_roughness[i];
    d_specular_albedo[i] += other.d_specular_albedo[i];
    d_normal[i] += other.d_normal[i];
    d_opacity_logit[i] += other.d_opacity_logit[i];
  }
}

GaussianGrads composite_backward(const GBufferGrads& grads,
                                 const std::vector<ProjectedGaussian>& projected,
                                 const GaussianCloud& cloud, const Camera& cam,
                                 const RasterizeOptions& opts) {
  const int w = cam.width, h = cam.height;
  Image d_fused(w, h, kGradChannels);
  const bool has_alpha = !grads.d_alpha.empty();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* d = d_fused.pixel(x, y);
      if (!grads.d_albedo.empty())
        for (int c = 0; c < 3; ++c) d[kChKd + c] = grads.d_albedo.at(x, y, c);
      if (!grads.d_specular.empty())
        for (int c = 0; c < 3; ++c) d[kChKs + c] = grads.d_specular.at(x, y, c);
      if (!grads.d_roughness.empty()) d[kChRough] = grads.d_roughness.at(x, y);
      if (!grads.d_normal_raw.empty())
        for (int c = 0; c < 3; ++c) d[kChNormal + c] = grads.d_normal_raw.at(x, y, c);
    }
  }

  const std::vector<double> attrs = gather_attributes(projected, cloud, kGradChannels);
  std::vector<double> d_attrs(projected.size() * kGradChannels, 0.0);
  std::vector<double> d_logit(projected.size(), 0.0);
  composite_backward_engine(projected, attrs.data(), kGradChannels, cloud,
                            d_fused.data().data(),
                            has_alpha ? grads.d_alpha.data().data() : nullptr, w, h, opts,
                            d_attrs.data(), d_logit.data());

  GaussianGrads out(cloud.count());
  for (size_t i = 0; i < projected.size(); ++i) {
    const int src = projected[i].source_index;
    const double* da = &d_attrs[i * kGradChannels];
    out.d_diffuse_albedo[src] += Vec3(da[kChKd], da[kChKd + 1], da[kChKd + 2]);
    out.d_specular_albedo[src] += Vec3(da[kChKs], da[kChKs + 1], da[kChKs + 2]);
    out.d_roughness[src] += da[kChRough];
    out.d_normal[src] += Vec3(da[kChNormal], da[kChNormal + 1], da[kChNormal + 2]);
    out.d_opacity_logit[src] += d_logit[i];
  }
  return out;
}

Image normal_renorm_backward(const GBuffer& gbuffer, const Image& d_normal_unit) {
  Image d_raw(gbuffer.width, gbuffer.height, 3);
  for (int y = 0; y < gbuffer.height; ++y) {
    for (int x = 0; x < gbuffer.width; ++x) {
      if (!gbuffer.surface_at(x, y)) continue;
      const Vec3 raw = gbuffer.normal_raw.rgb(x, y);
      const double len = raw.norm();
      if (len <= 1e-12) continue;
      const Vec3 unit = raw / len;
      const Vec3 d_unit = d_normal_unit.rgb(x, y);
      d_raw.set_rgb(x, y, (d_unit - unit * unit.dot(d_unit)) / len);
    }
  }
  return d_raw;
}

void dump_gbuffer(const GBuffer& gbuffer, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path base(dir);
  write_pfm((base / "gbuf_pos.pfm").string(), gbuffer.position_map);
  write_pfm((base / "gbuf_normal.pfm").string(), gbuffer.normal_map);
  write_pfm((base / "gbuf_kd.pfm").string(), gbuffer.albedo_map);
  write_pfm((base / "gbuf_rough.pfm").string(), gbuffer.roughness_map);
  write_pfm((base / "gbuf_ks.pfm").string(), gbuffer.specular_map);
  write_pfm((base / "gbuf_alpha.pfm").string(), gbuffer.alpha_map);
  write_pfm((base / "gbuf_depth.pfm").string(), gbuffer.depth_map);
}

}  // namespace dgs
