// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/scene/dataset.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dgs/core/image_io.hpp"

namespace dgs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Camera camera_from_manifest(const json& frame, double camera_angle_x, int width, int height) {
  const auto& m = frame.at("transform_matrix");
  if (m.size() != 4) throw FormatError("transform_matrix must be 4x4");
  Mat4 c2w;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) c2w(r, c) = m.at(r).at(c).get<double>();

  // OpenGL-style camera-to-world: flip the y and z basis vectors so the
  // camera looks down +z with image y down, then invert.
  Mat3 r_c2w = c2w.block<3, 3>(0, 0);
  r_c2w.col(1) *= -1.0;
  r_c2w.col(2) *= -1.0;
  const Vec3 center = c2w.block<3, 1>(0, 3);

  Camera cam;
  cam.rotation = r_c2w.transpose();
  cam.translation = -(cam.rotation * center);
  cam.width = width;
  cam.height = height;
  cam.fx = 0.5 * width / std::tan(0.5 * camera_angle_x);
  cam.fy = cam.fx;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.near_z = 0.01;
  cam.far_z = 100.0;
  return cam;
}

std::string resolve_image_path(const fs::path& root, std::string file_path) {
  fs::path p = root / file_path;
  if (fs::exists(p)) return p.string();
  if (p.extension().empty()) {
    fs::path with_ext = p;
    with_ext += ".png";
    if (fs::exists(with_ext)) return with_ext.string();
  }
  throw ConsistencyError("manifest references missing image: " + p.string());
}

}  // namespace

std::vector<TrainView> load_dataset(const std::string& root_path, Split split) {
  const fs::path root(root_path);
  const fs::path manifest =
      root / (split == Split::kTrain ? "transforms_train.json" : "transforms_test.json");
  std::ifstream in(manifest);
  if (!in) throw FormatError("missing manifest: " + manifest.string());

  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw FormatError("bad manifest JSON: " + std::string(e.what()));
  }
  if (!doc.contains("camera_angle_x") || !doc.contains("frames"))
    throw FormatError("manifest lacks camera_angle_x or frames");
  const double camera_angle_x = doc["camera_angle_x"].get<double>();

  std::vector<TrainView> views;
  views.reserve(doc["frames"].size());
  int expected_w = -1, expected_h = -1;
  for (const auto& frame : doc["frames"]) {
    TrainView view;
    const std::string img_path = resolve_image_path(root, frame.at("file_path").get<std::string>());
    Image raw = read_png(img_path);
    if (expected_w < 0) {
      expected_w = raw.width();
      expected_h = raw.height();
    } else if (raw.width() != expected_w || raw.height() != expected_h) {
      throw ConsistencyError("inconsistent image resolution: " + img_path);
    }

    view.image = Image(raw.width(), raw.height(), 3);
    view.mask = Image(raw.width(), raw.height(), 1, 1.0);
    for (int y = 0; y < raw.height(); ++y) {
      for (int x = 0; x < raw.width(); ++x) {
        for (int c = 0; c < 3; ++c)
          view.image.at(x, y, c) = raw.channels() >= 3 ? raw.at(x, y, c) : raw.at(x, y, 0);
        if (raw.channels() == 4) view.mask.at(x, y, 0) = raw.at(x, y, 3);
      }
    }
    view.camera = camera_from_manifest(frame, camera_angle_x, raw.width(), raw.height());
    if (!view.consistent()) throw ConsistencyError("view inconsistent with camera: " + img_path);
    views.push_back(std::move(view));
  }
  return views;
}

}  // namespace dgs
