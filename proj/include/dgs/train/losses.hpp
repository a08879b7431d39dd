// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dgs/raster/gbuffer.hpp"

namespace dgs {

/// (l_L1, l_ssim): mean absolute difference and (1 - SSIM)/2. The SSIM here
/// is exactly metrics::ssim (11x11 Gaussian window, luminance).
std::pair<double, double> photometric_losses(const Image& rendered, const Image& target);

/// Accumulates d(d_l1 * l_L1 + d_ssim * l_ssim)/d(rendered) into d_rendered.
void photometric_backward(const Image& rendered, const Image& target, double d_l1,
                          double d_ssim, Image& d_rendered);

/// Mean |alpha - mask|.
double mask_loss(const Image& alpha, const Image& mask);
void mask_loss_backward(const Image& alpha, const Image& mask, double d_loss, Image& d_alpha);

/// Total variation of the three material maps (k_d, roughness, k_s):
/// sum of |horizontal| + |vertical| neighbor differences over pixel pairs
/// whose endpoints are both above the surface-alpha threshold, divided by
/// the pixel count, summed over the three maps.
double tv_loss(const GBuffer& gbuffer);
void tv_loss_backward(const GBuffer& gbuffer, double d_loss, GBufferGrads& grads);

}  // namespace dgs
