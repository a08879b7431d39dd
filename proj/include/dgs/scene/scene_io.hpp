// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "dgs/ibl/environment.hpp"
#include "dgs/scene/gaussian.hpp"

namespace dgs {

/// Scene file, magic "DGS1": little-endian binary holding the cloud and the
/// environment base map (split-sum products are rebuilt on demand).
/// Per-Gaussian record: position(3), rotation quaternion wxyz(4),
/// log-scale(3), opacity logit(1), normal(3), diffuse albedo(3),
/// roughness(1), specular albedo(3) — float64 each, so round-trips are
/// bit-exact.
void save_scene(const GaussianCloud& cloud, const EnvironmentLight& light,
                const std::string& path);

struct LoadedScene {
  GaussianCloud cloud;
  EnvironmentLight light;  // loaded dirty; call refresh() before shading
};

LoadedScene load_scene(const std::string& path);

}  // namespace dgs
