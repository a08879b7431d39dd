// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "dgs/scene/camera.hpp"

namespace dgs {

enum class Split { kTrain, kTest };

/// Loads a posed multi-view capture rooted at `root_path`.
///
/// Expected layout: `transforms_train.json` / `transforms_test.json` with
/// `camera_angle_x` and `frames[] = {file_path, transform_matrix}`, where
/// transform_matrix is a 4x4 camera-to-world matrix in the OpenGL convention
/// (camera looks down -z, y up). Cameras are converted to this project's
/// world-to-camera, y-down, looks-down-+z convention. RGBA images provide the
/// mask through their alpha channel; RGB images get an all-ones mask.
std::vector<TrainView> load_dataset(const std::string& root_path, Split split);

}  // namespace dgs
