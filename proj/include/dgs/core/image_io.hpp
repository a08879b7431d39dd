// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "dgs/core/image.hpp"

namespace dgs {

/// Loads an 8-bit PNG as values in [0,1]. Grayscale and palette images are
/// expanded; the result has 1, 3 or 4 channels. Values are taken as stored
/// (no gamma transform).
Image read_png(const std::string& path);

/// Writes a 1- or 3-channel image as 8-bit PNG, clamping to [0,1].
void write_png(const std::string& path, const Image& image);

/// PFM, 32-bit float, little-endian, bottom-up scanlines ("PF" color / "Pf"
/// grayscale). The image is converted to/from double at the boundary.
Image read_pfm(const std::string& path);
void write_pfm(const std::string& path, const Image& image);

}  // namespace dgs
