// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/metrics/metrics.hpp"

#include <cmath>
#include <fstream>

namespace dgs {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* who) {
  if (!a.same_shape(b)) throw ConsistencyError(std::string(who) + ": dimension mismatch");
}

constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

Image to_luminance(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw ConsistencyError("ssim expects 1 or 3 channels");
  Image out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out.at(x, y) = kLumaR * img.at(x, y, 0) + kLumaG * img.at(x, y, 1) +
                     kLumaB * img.at(x, y, 2);
  return out;
}

std::vector<double> gaussian_kernel(int radius, double sigma) {
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

struct SsimContext {
  int radius;
  int vw, vh;           // valid-region size
  std::vector<double> kernel;
  // Per valid-center derivative maps.
  Image g_mu, g_sxx, g_sxy;
};

// Weighted window sums around a valid center (cx, cy are top-left offsets of
// the window, i.e. center minus radius).
template <typename Fn>
void for_window(const SsimContext& ctx, int cx, int cy, Fn&& fn) {
  const int size = 2 * ctx.radius + 1;
  for (int dy = 0; dy < size; ++dy)
    for (int dx = 0; dx < size; ++dx)
      fn(cx + dx, cy + dy, ctx.kernel[dx] * ctx.kernel[dy]);
}

double ssim_core(const Image& a_any, const Image& b_any, Image* d_a_out) {
  require_same_shape(a_any, b_any, "ssim");
  const Image a = to_luminance(a_any);
  const Image b = to_luminance(b_any);
  const int w = a.width(), h = a.height();

  SsimContext ctx;
  int window = std::min({11, w, h});
  if (window % 2 == 0) --window;
  if (window < 1) throw ConsistencyError("ssim: empty image");
  ctx.radius = window / 2;
  ctx.kernel = gaussian_kernel(ctx.radius, 1.5);
  ctx.vw = w - 2 * ctx.radius;
  ctx.vh = h - 2 * ctx.radius;

  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;

  const bool want_grad = d_a_out != nullptr;
  if (want_grad) {
    ctx.g_mu = Image(ctx.vw, ctx.vh, 1);
    ctx.g_sxx = Image(ctx.vw, ctx.vh, 1);
    ctx.g_sxy = Image(ctx.vw, ctx.vh, 1);
  }

  double total = 0.0;
  for (int cy = 0; cy < ctx.vh; ++cy) {
    for (int cx = 0; cx < ctx.vw; ++cx) {
      double mu_x = 0, mu_y = 0, sxx = 0, syy = 0, sxy = 0;
      for_window(ctx, cx, cy, [&](int px, int py, double wgt) {
        const double xv = a.at(px, py), yv = b.at(px, py);
        mu_x += wgt * xv;
        mu_y += wgt * yv;
        sxx += wgt * xv * xv;
        syy += wgt * yv * yv;
        sxy += wgt * xv * yv;
      });
      const double var_x = sxx - mu_x * mu_x;
      const double var_y = syy - mu_y * mu_y;
      const double cov = sxy - mu_x * mu_y;
      const double a1 = 2 * mu_x * mu_y + kC1;
      const double a2 = 2 * cov + kC2;
      const double b1 = mu_x * mu_x + mu_y * mu_y + kC1;
      const double b2 = var_x + var_y + kC2;
      const double s = (a1 * a2) / (b1 * b2);
      total += s;
      if (want_grad) {
        // s as a function of (mu_x, Sxx, Sxy) with Sxx/Sxy the raw moments.
        ctx.g_sxx.at(cx, cy) = -s / b2;
        ctx.g_sxy.at(cx, cy) = 2 * a1 / (b1 * b2);
        ctx.g_mu.at(cx, cy) = 2 * mu_y * (a2 - a1) / (b1 * b2) - 2 * s * mu_x / b1 +
                              2 * s * mu_x / b2;
      }
    }
  }
  const double count = static_cast<double>(ctx.vw) * ctx.vh;
  const double mean_ssim = total / count;

  if (want_grad) {
    // d SSIM / d a(q) = (1/P) sum over windows covering q of
    //   w * (g_mu + 2 a(q) g_sxx + b(q) g_sxy).
    Image d_luma(w, h, 1);
    for (int cy = 0; cy < ctx.vh; ++cy)
      for (int cx = 0; cx < ctx.vw; ++cx) {
        const double gm = ctx.g_mu.at(cx, cy);
        const double gx = ctx.g_sxx.at(cx, cy);
        const double gs = ctx.g_sxy.at(cx, cy);
        for_window(ctx, cx, cy, [&](int px, int py, double wgt) {
          d_luma.at(px, py) +=
              wgt * (gm + 2.0 * a.at(px, py) * gx + b.at(px, py) * gs) / count;
        });
      }
    *d_a_out = Image(a_any.width(), a_any.height(), a_any.channels());
    if (a_any.channels() == 1) {
      *d_a_out = d_luma;
    } else {
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double g = d_luma.at(x, y);
          d_a_out->at(x, y, 0) = kLumaR * g;
          d_a_out->at(x, y, 1) = kLumaG * g;
          d_a_out->at(x, y, 2) = kLumaB * g;
        }
    }
  }
  return mean_ssim;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  const double mse = mean_sq_diff(a, b);
  if (mse <= 1e-10) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) { return ssim_core(a, b, nullptr); }

double ssim_with_gradient(const Image& a, const Image& b, Image& d_a) {
  return ssim_core(a, b, &d_a);
}

double normal_mse(const Image& pred, const Image& gt, const Image& mask) {
  require_same_shape(pred, gt, "normal_mse");
  if (mask.width() != pred.width() || mask.height() != pred.height())
    throw ConsistencyError("normal_mse: mask dimension mismatch");
  double sum = 0.0;
  size_t count = 0;
  for (int y = 0; y < pred.height(); ++y)
    for (int x = 0; x < pred.width(); ++x) {
      if (mask.at(x, y) <= 0.5) continue;
      double d2 = 0.0;
      for (int c = 0; c < pred.channels(); ++c) d2 += sqr(pred.at(x, y, c) - gt.at(x, y, c));
      sum += d2;
      ++count;
    }
  if (count == 0) throw ConsistencyError("normal_mse: empty mask");
  return sum / count;
}

Image albedo_scale_align(const Image& pred, const Image& gt, const Image& mask) {
  require_same_shape(pred, gt, "albedo_scale_align");
  if (mask.width() != pred.width() || mask.height() != pred.height())
    throw ConsistencyError("albedo_scale_align: mask dimension mismatch");
  size_t count = 0;
  std::vector<double> dot(pred.channels(), 0.0), pred_sq(pred.channels(), 0.0),
      gt_sq(pred.channels(), 0.0);
  for (int y = 0; y < pred.height(); ++y)
    for (int x = 0; x < pred.width(); ++x) {
      if (mask.at(x, y) <= 0.5) continue;
      ++count;
      for (int c = 0; c < pred.channels(); ++c) {
        dot[c] += pred.at(x, y, c) * gt.at(x, y, c);
        pred_sq[c] += sqr(pred.at(x, y, c));
        gt_sq[c] += sqr(gt.at(x, y, c));
      }
    }
  if (count == 0) throw ConsistencyError("albedo_scale_align: empty mask");

  Image out = pred;
  for (int c = 0; c < pred.channels(); ++c) {
    if (gt_sq[c] < 1e-6 || pred_sq[c] < 1e-12) continue;  // glossy caveat: skip
    const double scale = dot[c] / pred_sq[c];
    for (int y = 0; y < pred.height(); ++y)
      for (int x = 0; x < pred.width(); ++x) out.at(x, y, c) = pred.at(x, y, c) * scale;
  }
  return out;
}

MetricRow MetricReport::aggregate() const {
  MetricRow mean;
  mean.view = "mean";
  if (rows.empty()) return mean;
  size_t normal_count = 0;
  double normal_sum = 0.0;
  for (const MetricRow& r : rows) {
    mean.psnr += r.psnr;
    mean.ssim += r.ssim;
    if (std::isfinite(r.normal_mse)) {
      normal_sum += r.normal_mse;
      ++normal_count;
    }
  }
  mean.psnr /= rows.size();
  mean.ssim /= rows.size();
  mean.normal_mse = normal_count ? normal_sum / normal_count
                                 : std::numeric_limits<double>::quiet_NaN();
  return mean;
}

void write_report_csv(const MetricReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open for write: " + path);
  out << "view,psnr,ssim,normal_mse\n";
  const auto emit = [&out](const MetricRow& r) {
    out << r.view << "," << r.psnr << "," << r.ssim << ",";
    if (std::isfinite(r.normal_mse)) out << r.normal_mse;
    else out << "nan";
    out << "\n";
  };
  for (const MetricRow& r : report.rows) emit(r);
  emit(report.aggregate());
}

}  // namespace dgs
