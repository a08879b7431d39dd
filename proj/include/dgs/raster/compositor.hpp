// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "dgs/core/image.hpp"
#include "dgs/raster/projection.hpp"

namespace dgs {

struct RasterizeOptions {
  int tile_size = 16;
  int threads = 1;
};

/// Writes one splat's blended attribute values (channel count fixed by the
/// composite call) into `out`.
using AttributeSelector =
    std::function<void(const Gaussian&, const ProjectedGaussian&, double* out)>;

struct CompositeResult {
  Image attribute;  // `channels` channels
  Image alpha;      // 1 channel
};

/// Front-to-back alpha compositing of an arbitrary per-splat attribute:
/// out = sum_i attr_i * alpha_i * T_i with T_i = prod_{j<i} (1 - alpha_j) and
/// alpha_i = min(opacity_i, 0.99) * exp(-0.5 d^T conic d). Splats with
/// alpha < 1/255 are skipped; accumulation stops once T < 1e-4. `projected`
/// must be depth-sorted front to back. Deterministic for a fixed input order
/// regardless of tile size or thread count.
CompositeResult composite(const std::vector<ProjectedGaussian>& projected,
                          const GaussianCloud& cloud, int channels,
                          const AttributeSelector& selector, const Camera& cam,
                          const RasterizeOptions& opts = {});

/// Raw engine entry points shared by composite / render_gbuffer and their
/// backward passes. `attrs` is n_splats x channels, indexed in projected
/// order. Outputs are width x height x channels (+ a 1-channel alpha plane).
void composite_forward_engine(const std::vector<ProjectedGaussian>& projected,
                              const double* attrs, int channels, int width, int height,
                              const RasterizeOptions& opts, double* out_attr,
                              double* out_alpha);

/// Adjoint of the forward engine: accumulates dL/dattr (n_splats x channels)
/// and dL/dopacity_logit (n_splats) from per-pixel output gradients. The
/// forward state is reconstructed in place, so the inputs must match the
/// forward call exactly. Gradients are reduced over per-worker partials in
/// worker order (identical results for a fixed thread count; across thread
/// counts equal up to reduction order).
void composite_backward_engine(const std::vector<ProjectedGaussian>& projected,
                               const double* attrs, int channels,
                               const GaussianCloud& cloud, const double* d_out_attr,
                               const double* d_out_alpha, int width, int height,
                               const RasterizeOptions& opts, double* d_attrs,
                               double* d_opacity_logit);

}  // namespace dgs
