// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cassert>
#include <vector>

#include "dgs/core/types.hpp"

namespace dgs {

/// Dense raster of double-precision samples, row-major, interleaved channels.
/// Pixel (0,0) is the top-left corner; y grows downward.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0)
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<size_t>(width) * height * channels, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  size_t size() const { return data_.size(); }

  double& at(int x, int y, int c = 0) {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_ && c >= 0 && c < channels_);
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int x, int y, int c = 0) const {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_ && c >= 0 && c < channels_);
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }

  double* pixel(int x, int y) { return &data_[(static_cast<size_t>(y) * width_ + x) * channels_]; }
  const double* pixel(int x, int y) const {
    return &data_[(static_cast<size_t>(y) * width_ + x) * channels_];
  }

  Vec3 rgb(int x, int y) const {
    const double* p = pixel(x, y);
    return Vec3(p[0], p[1], p[2]);
  }
  void set_rgb(int x, int y, const Vec3& v) {
    double* p = pixel(x, y);
    p[0] = v.x();
    p[1] = v.y();
    p[2] = v.z();
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Image& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Mean of |a - b| over all samples. Shapes must match.
double mean_abs_diff(const Image& a, const Image& b);

/// Mean of (a - b)^2 over all samples. Shapes must match.
double mean_sq_diff(const Image& a, const Image& b);

/// Largest |a - b| over all samples. Shapes must match.
double max_abs_diff(const Image& a, const Image& b);

}  // namespace dgs
