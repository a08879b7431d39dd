// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dgs/core/types.hpp"

namespace dgs {

/// Adam with bias correction, beta = (0.9, 0.999). One instance per
/// parameter group; the caller supplies matching parameter/gradient spans.
class Adam {
 public:
  explicit Adam(double epsilon = 1e-8) : epsilon_(epsilon) {}

  void resize(size_t n) {
    m_.assign(n, 0.0);
    v_.assign(n, 0.0);
  }
  size_t size() const { return m_.size(); }

  /// In-place update of params[i] -= lr * m_hat / (sqrt(v_hat) + eps).
  void step(double* params, const double* grads, size_t n, double lr);

  /// Keeps moments for `keep[i]` rows (others dropped), appends zero-moment
  /// rows up to new_size. `stride` doubles per row.
  void remap(const std::vector<int>& parents, size_t new_size, size_t stride);

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  double epsilon_;
  int64_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace dgs
