// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/core/image.hpp"

namespace dgs {

static void check_shapes(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ConsistencyError("image shape mismatch");
}

double mean_abs_diff(const Image& a, const Image& b) {
  check_shapes(a, b);
  if (a.size() == 0) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) sum += std::abs(a.data()[i] - b.data()[i]);
  return sum / static_cast<double>(a.size());
}

double mean_sq_diff(const Image& a, const Image& b) {
  check_shapes(a, b);
  if (a.size() == 0) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) sum += sqr(a.data()[i] - b.data()[i]);
  return sum / static_cast<double>(a.size());
}

double max_abs_diff(const Image& a, const Image& b) {
  check_shapes(a, b);
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace dgs
