// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dgs/ibl/precompute.hpp"

namespace dgs {

/// The optimizable light: a base HDR cube map plus its split-sum products.
/// Any mutation of `base` must go through mark_dirty(); shading refuses to
/// run against stale products.
struct EnvironmentLight {
  CubeMap base;
  PrecomputedLight precomputed;
  bool dirty = true;

  EnvironmentLight() = default;
  explicit EnvironmentLight(CubeMap base_map) : base(std::move(base_map)) {}

  void mark_dirty() { dirty = true; }

  /// Rebuilds the split-sum products from `base` and clears the dirty flag.
  /// The BRDF LUT is environment independent and only built when missing.
  void refresh(const PrecomputeOptions& opts);
};

}  // namespace dgs
