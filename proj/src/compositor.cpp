// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/raster/compositor.hpp"

#include <cstring>

#include "dgs/core/parallel.hpp"

namespace dgs {

namespace {

// Hot-loop splat data unpacked from ProjectedGaussian.
struct FlatSplat {
  double mx, my;
  double con_a, con_b, con_c;  // conic: [a b; b c]
  double alpha_max;
  int x_lo, x_hi, y_lo, y_hi;
};

std::vector<FlatSplat> flatten(const std::vector<ProjectedGaussian>& projected) {
  std::vector<FlatSplat> flat(projected.size());
  for (size_t i = 0; i < projected.size(); ++i) {
    const ProjectedGaussian& pg = projected[i];
    flat[i] = {pg.mean2d.x(), pg.mean2d.y(), pg.conic(0, 0), pg.conic(0, 1), pg.conic(1, 1),
               pg.alpha_max, pg.x_lo, pg.x_hi, pg.y_lo, pg.y_hi};
  }
  return flat;
}

struct TileGrid {
  int tiles_x = 0, tiles_y = 0, tile_size = 16;
  std::vector<std::vector<int>> bins;  // splat indices in depth order
};

TileGrid build_bins(const std::vector<FlatSplat>& flat, int width, int height, int tile_size) {
  TileGrid grid;
  grid.tile_size = tile_size;
  grid.tiles_x = (width + tile_size - 1) / tile_size;
  grid.tiles_y = (height + tile_size - 1) / tile_size;
  grid.bins.resize(static_cast<size_t>(grid.tiles_x) * grid.tiles_y);
  for (size_t i = 0; i < flat.size(); ++i) {
    const FlatSplat& s = flat[i];
    const int tx0 = s.x_lo / tile_size, tx1 = s.x_hi / tile_size;
    const int ty0 = s.y_lo / tile_size, ty1 = s.y_hi / tile_size;
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        grid.bins[static_cast<size_t>(ty) * grid.tiles_x + tx].push_back(static_cast<int>(i));
  }
  return grid;
}

inline double splat_alpha(const FlatSplat& s, double px, double py) {
  const double dx = px - s.mx;
  const double dy = py - s.my;
  const double power = 0.5 * (s.con_a * dx * dx + s.con_c * dy * dy) + s.con_b * dx * dy;
  if (power < 0.0) return 0.0;  // numerically impossible for a PD conic; be safe
  return s.alpha_max * std::exp(-power);
}

struct Contribution {
  int splat;     // index into `projected`
  double alpha;
  double transmittance;  // T before this contribution
};

}  // namespace

void composite_forward_engine(const std::vector<ProjectedGaussian>& projected,
                              const double* attrs, int channels, int width, int height,
                              const RasterizeOptions& opts, double* out_attr,
                              double* out_alpha) {
  const std::vector<FlatSplat> flat = flatten(projected);
  const TileGrid grid = build_bins(flat, width, height, opts.tile_size);

  // Tiles own disjoint pixel regions and fully initialize them, so no global
  // clear is needed and dynamic scheduling is safe (the foreground tends to
  // concentrate in a few tiles, which starves a static partition).
  const int64_t n_tiles = static_cast<int64_t>(grid.tiles_x) * grid.tiles_y;
  parallel_for_dynamic(n_tiles, opts.threads, 4, [&](int64_t begin, int64_t end) {
    for (int64_t tile = begin; tile < end; ++tile) {
      const auto& bin = grid.bins[tile];
      const int tx = static_cast<int>(tile % grid.tiles_x);
      const int ty = static_cast<int>(tile / grid.tiles_x);
      const int px0 = tx * grid.tile_size, px1 = std::min(px0 + grid.tile_size, width);
      const int py0 = ty * grid.tile_size, py1 = std::min(py0 + grid.tile_size, height);
      for (int py = py0; py < py1; ++py) {
        std::memset(out_attr + (static_cast<size_t>(py) * width + px0) * channels, 0,
                    sizeof(double) * (px1 - px0) * channels);
        std::memset(out_alpha + static_cast<size_t>(py) * width + px0, 0,
                    sizeof(double) * (px1 - px0));
      }
      if (bin.empty()) continue;
      std::vector<int> row_list;
      row_list.reserve(bin.size());
      for (int py = py0; py < py1; ++py) {
        // Row pre-filter keeps the per-pixel scan to splats that can touch
        // this row (order preserved, so results match the naive scan).
        row_list.clear();
        for (const int idx : bin) {
          const FlatSplat& s = flat[idx];
          if (py >= s.y_lo && py <= s.y_hi) row_list.push_back(idx);
        }
        if (row_list.empty()) continue;
        for (int px = px0; px < px1; ++px) {
          double transmittance = 1.0;
          double accum_alpha = 0.0;
          double* out = out_attr + (static_cast<size_t>(py) * width + px) * channels;
          for (const int idx : row_list) {
            const FlatSplat& s = flat[idx];
            if (px < s.x_lo || px > s.x_hi) continue;
            const double a = splat_alpha(s, px + 0.5, py + 0.5);
            if (a < kMinSplatAlpha) continue;
            const double w = a * transmittance;
            const double* attr = attrs + static_cast<size_t>(idx) * channels;
            for (int c = 0; c < channels; ++c) out[c] += w * attr[c];
            accum_alpha += w;
            transmittance *= 1.0 - a;
            if (transmittance < kTransmittanceStop) break;
          }
          out_alpha[static_cast<size_t>(py) * width + px] = accum_alpha;
        }
      }
    }
  });
}

void composite_backward_engine(const std::vector<ProjectedGaussian>& projected,
                               const double* attrs, int channels,
                               const GaussianCloud& cloud, const double* d_out_attr,
                               const double* d_out_alpha, int width, int height,
                               const RasterizeOptions& opts, double* d_attrs,
                               double* d_opacity_logit) {
  const size_t n = projected.size();
  std::memset(d_attrs, 0, sizeof(double) * n * channels);
  std::memset(d_opacity_logit, 0, sizeof(double) * n);
  if (n == 0) return;

  const std::vector<FlatSplat> flat = flatten(projected);
  const TileGrid grid = build_bins(flat, width, height, opts.tile_size);

  const int workers = std::max(1, opts.threads);
  std::vector<std::vector<double>> partial_attrs(workers);
  std::vector<std::vector<double>> partial_logit(workers);

  const int64_t n_tiles = static_cast<int64_t>(grid.tiles_x) * grid.tiles_y;
  parallel_for(n_tiles, workers, [&](int64_t begin, int64_t end, int worker) {
    std::vector<double>& g_attrs = partial_attrs[worker];
    std::vector<double>& g_logit = partial_logit[worker];
    g_attrs.assign(n * channels, 0.0);
    g_logit.assign(n, 0.0);
    std::vector<Contribution> stack;
    std::vector<double> suffix(channels);
    std::vector<int> row_list;

    for (int64_t tile = begin; tile < end; ++tile) {
      const auto& bin = grid.bins[tile];
      if (bin.empty()) continue;
      const int tx = static_cast<int>(tile % grid.tiles_x);
      const int ty = static_cast<int>(tile / grid.tiles_x);
      const int px0 = tx * grid.tile_size, px1 = std::min(px0 + grid.tile_size, width);
      const int py0 = ty * grid.tile_size, py1 = std::min(py0 + grid.tile_size, height);
      for (int py = py0; py < py1; ++py) {
        row_list.clear();
        for (const int idx : bin) {
          const FlatSplat& s = flat[idx];
          if (py >= s.y_lo && py <= s.y_hi) row_list.push_back(idx);
        }
        if (row_list.empty()) continue;
        for (int px = px0; px < px1; ++px) {
          // Replay the forward pass for this pixel.
          stack.clear();
          double transmittance = 1.0;
          for (const int idx : row_list) {
            const FlatSplat& s = flat[idx];
            if (px < s.x_lo || px > s.x_hi) continue;
            const double a = splat_alpha(s, px + 0.5, py + 0.5);
            if (a < kMinSplatAlpha) continue;
            stack.push_back({idx, a, transmittance});
            transmittance *= 1.0 - a;
            if (transmittance < kTransmittanceStop) break;
          }
          if (stack.empty()) continue;

          const double* d_out =
              d_out_attr ? d_out_attr + (static_cast<size_t>(py) * width + px) * channels
                         : nullptr;
          const double d_alpha_px =
              d_out_alpha ? d_out_alpha[static_cast<size_t>(py) * width + px] : 0.0;
          bool any = d_alpha_px != 0.0;
          if (d_out)
            for (int c = 0; c < channels; ++c) any = any || d_out[c] != 0.0;
          if (!any) continue;

          // Suffix sums over later contributions let each alpha gradient see
          // the transmittance it removed from everything behind it.
          std::fill(suffix.begin(), suffix.end(), 0.0);
          double suffix_alpha = 0.0;
          for (size_t k = stack.size(); k-- > 0;) {
            const Contribution& con = stack[k];
            const double w = con.alpha * con.transmittance;
            const double* attr = attrs + static_cast<size_t>(con.splat) * channels;
            double d_a = 0.0;
            if (d_out) {
              double* ga = &g_attrs[static_cast<size_t>(con.splat) * channels];
              for (int c = 0; c < channels; ++c) {
                ga[c] += d_out[c] * w;
                d_a += d_out[c] *
                       (attr[c] * con.transmittance - suffix[c] / (1.0 - con.alpha));
              }
            }
            d_a += d_alpha_px * (con.transmittance - suffix_alpha / (1.0 - con.alpha));

            // alpha = min(opacity, 0.99) * G; gradient flows only through the
            // unclamped opacity branch.
            const Gaussian& g = cloud[projected[con.splat].source_index];
            const double opacity = g.opacity();
            if (opacity < kAlphaClampMax) {
              const double gaussian_weight = con.alpha / opacity;
              g_logit[con.splat] += d_a * gaussian_weight * opacity * (1.0 - opacity);
            }

            if (d_out) {
              for (int c = 0; c < channels; ++c) suffix[c] += attr[c] * w;
            }
            suffix_alpha += w;
          }
        }
      }
    }
  });

  for (int w = 0; w < workers; ++w) {
    if (partial_attrs[w].empty()) continue;
    for (size_t i = 0; i < n * channels; ++i) d_attrs[i] += partial_attrs[w][i];
    for (size_t i = 0; i < n; ++i) d_opacity_logit[i] += partial_logit[w][i];
  }
}

CompositeResult composite(const std::vector<ProjectedGaussian>& projected,
                          const GaussianCloud& cloud, int channels,
                          const AttributeSelector& selector, const Camera& cam,
                          const RasterizeOptions& opts) {
  std::vector<double> attrs(projected.size() * channels, 0.0);
  for (size_t i = 0; i < projected.size(); ++i)
    selector(cloud[projected[i].source_index], projected[i], &attrs[i * channels]);

  CompositeResult result;
  result.attribute = Image(cam.width, cam.height, channels);
  result.alpha = Image(cam.width, cam.height, 1);
  composite_forward_engine(projected, attrs.data(), channels, cam.width, cam.height, opts,
                           result.attribute.data().data(), result.alpha.data().data());
  return result;
}

}  // namespace dgs
