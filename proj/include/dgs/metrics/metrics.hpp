// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "dgs/core/image.hpp"

namespace dgs {

/// Peak signal-to-noise ratio for images in [0,1]; identical images cap at
/// 100 dB. Symmetric.
double psnr(const Image& a, const Image& b);

/// Structural similarity: 11x11 Gaussian window (sigma 1.5), standard
/// stabilizers, luminance conversion for RGB inputs, mean over the valid
/// window region. In (-1, 1]; exactly 1 iff the images match.
double ssim(const Image& a, const Image& b);

/// Same value as ssim(), also filling d(SSIM)/d(a) with the analytic
/// gradient (shape of `a`; the luminance chain is included for RGB).
double ssim_with_gradient(const Image& a, const Image& b, Image& d_a);

/// Mean squared norm of the per-pixel normal difference over masked pixels
/// (mask > 0.5). Throws on an empty mask.
double normal_mse(const Image& pred, const Image& gt, const Image& mask);

/// Per-channel least-squares scale s_c = sum(pred*gt)/sum(pred^2) over the
/// mask, applied to pred. Channels whose ground-truth energy is below 1e-6
/// are left unscaled (the glossy-scene caveat).
Image albedo_scale_align(const Image& pred, const Image& gt, const Image& mask);

struct MetricRow {
  std::string view;
  double psnr = 0.0;
  double ssim = 0.0;
  double normal_mse = std::numeric_limits<double>::quiet_NaN();
};

struct MetricReport {
  std::vector<MetricRow> rows;
  /// Arithmetic mean of the per-view rows (NaN normal columns are skipped).
  MetricRow aggregate() const;
};

/// CSV rows `view,psnr,ssim,normal_mse` plus a final mean row.
void write_report_csv(const MetricReport& report, const std::string& path);

}  // namespace dgs
