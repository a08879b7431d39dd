// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/train/losses.hpp"

#include "dgs/metrics/metrics.hpp"

namespace dgs {

std::pair<double, double> photometric_losses(const Image& rendered, const Image& target) {
  if (!rendered.same_shape(target)) throw ConsistencyError("photometric: dimension mismatch");
  const double l1 = mean_abs_diff(rendered, target);
  const double ssim_loss = 0.5 * (1.0 - ssim(rendered, target));
  return {l1, ssim_loss};
}

void photometric_backward(const Image& rendered, const Image& target, double d_l1,
                          double d_ssim, Image& d_rendered) {
  if (!rendered.same_shape(target)) throw ConsistencyError("photometric: dimension mismatch");
  if (d_rendered.empty()) d_rendered = Image(rendered.width(), rendered.height(), rendered.channels());
  if (d_l1 != 0.0) {
    const double w = d_l1 / static_cast<double>(rendered.size());
    for (size_t i = 0; i < rendered.size(); ++i) {
      const double diff = rendered.data()[i] - target.data()[i];
      if (diff > 0.0)
        d_rendered.data()[i] += w;
      else if (diff < 0.0)
        d_rendered.data()[i] -= w;
    }
  }
  if (d_ssim != 0.0) {
    Image d_ssim_img;
    ssim_with_gradient(rendered, target, d_ssim_img);
    // l_ssim = (1 - SSIM)/2.
    for (size_t i = 0; i < rendered.size(); ++i)
      d_rendered.data()[i] += d_ssim * (-0.5) * d_ssim_img.data()[i];
  }
}

double mask_loss(const Image& alpha, const Image& mask) {
  if (!alpha.same_shape(mask)) throw ConsistencyError("mask_loss: dimension mismatch");
  return mean_abs_diff(alpha, mask);
}

void mask_loss_backward(const Image& alpha, const Image& mask, double d_loss, Image& d_alpha) {
  if (!alpha.same_shape(mask)) throw ConsistencyError("mask_loss: dimension mismatch");
  if (d_alpha.empty()) d_alpha = Image(alpha.width(), alpha.height(), 1);
  const double w = d_loss / static_cast<double>(alpha.size());
  for (size_t i = 0; i < alpha.size(); ++i) {
    const double diff = alpha.data()[i] - mask.data()[i];
    if (diff > 0.0)
      d_alpha.data()[i] += w;
    else if (diff < 0.0)
      d_alpha.data()[i] -= w;
  }
}

namespace {

template <typename PairFn>
void for_masked_pairs(const GBuffer& gb, PairFn&& fn) {
  const int w = gb.width, h = gb.height;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!gb.surface_at(x, y)) continue;
      if (x + 1 < w && gb.surface_at(x + 1, y)) fn(x, y, x + 1, y);
      if (y + 1 < h && gb.surface_at(x, y + 1)) fn(x, y, x, y + 1);
    }
}

}  // namespace

double tv_loss(const GBuffer& gb) {
  const double norm = 1.0 / (static_cast<double>(gb.width) * gb.height);
  double total = 0.0;
  for_masked_pairs(gb, [&](int x0, int y0, int x1, int y1) {
    for (int c = 0; c < 3; ++c) {
      total += std::abs(gb.albedo_map.at(x0, y0, c) - gb.albedo_map.at(x1, y1, c));
      total += std::abs(gb.specular_map.at(x0, y0, c) - gb.specular_map.at(x1, y1, c));
    }
    total += std::abs(gb.roughness_map.at(x0, y0) - gb.roughness_map.at(x1, y1));
  });
  return total * norm;
}

void tv_loss_backward(const GBuffer& gb, double d_loss, GBufferGrads& grads) {
  if (grads.d_albedo.empty()) grads.d_albedo = Image(gb.width, gb.height, 3);
  if (grads.d_specular.empty()) grads.d_specular = Image(gb.width, gb.height, 3);
  if (grads.d_roughness.empty()) grads.d_roughness = Image(gb.width, gb.height, 1);
  const double w = d_loss / (static_cast<double>(gb.width) * gb.height);
  const auto add_sign = [w](Image& d, int x0, int y0, int x1, int y1, int c, double diff) {
    if (diff > 0.0) {
      d.at(x0, y0, c) += w;
      d.at(x1, y1, c) -= w;
    } else if (diff < 0.0) {
      d.at(x0, y0, c) -= w;
      d.at(x1, y1, c) += w;
    }
  };
  for_masked_pairs(gb, [&](int x0, int y0, int x1, int y1) {
    for (int c = 0; c < 3; ++c) {
      add_sign(grads.d_albedo, x0, y0, x1, y1, c,
               gb.albedo_map.at(x0, y0, c) - gb.albedo_map.at(x1, y1, c));
      add_sign(grads.d_specular, x0, y0, x1, y1, c,
               gb.specular_map.at(x0, y0, c) - gb.specular_map.at(x1, y1, c));
    }
    add_sign(grads.d_roughness, x0, y0, x1, y1, 0,
             gb.roughness_map.at(x0, y0) - gb.roughness_map.at(x1, y1));
  });
}

}  // namespace dgs
