// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/train/adam.hpp"

#include <cmath>
#include <istream>
#include <ostream>

namespace dgs {

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
}  // namespace

void Adam::step(double* params, const double* grads, size_t n, double lr) {
  if (m_.size() != n) resize(n);
  ++t_;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (size_t i = 0; i < n; ++i) {
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grads[i];
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grads[i] * grads[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + epsilon_);
  }
}

void Adam::remap(const std::vector<int>& parents, size_t new_size, size_t stride) {
  std::vector<double> m(new_size * stride, 0.0), v(new_size * stride, 0.0);
  for (size_t row = 0; row < parents.size() && row < new_size; ++row) {
    const int src = parents[row];
    if (src < 0) continue;  // fresh row keeps zero moments
    for (size_t c = 0; c < stride; ++c) {
      if (static_cast<size_t>(src) * stride + c < m_.size()) {
        m[row * stride + c] = m_[src * stride + c];
        v[row * stride + c] = v_[src * stride + c];
      }
    }
  }
  m_ = std::move(m);
  v_ = std::move(v);
}

void Adam::save(std::ostream& out) const {
  const uint64_t n = m_.size();
  out.write(reinterpret_cast<const char*>(&t_), sizeof(t_));
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(m_.data()), n * sizeof(double));
  out.write(reinterpret_cast<const char*>(v_.data()), n * sizeof(double));
}

void Adam::load(std::istream& in) {
  uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&t_), sizeof(t_));
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  m_.resize(n);
  v_.resize(n);
  in.read(reinterpret_cast<char*>(m_.data()), n * sizeof(double));
  in.read(reinterpret_cast<char*>(v_.data()), n * sizeof(double));
  if (!in) throw FormatError("truncated optimizer state");
}

}  // namespace dgs
