// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/scene/scene_io.hpp"

#include <cstring>
#include <fstream>

namespace dgs {

namespace {

constexpr char kMagic[4] = {'D', 'G', 'S', '1'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("truncated scene file");
  return v;
}

void put_vec3(std::ostream& out, const Vec3& v) {
  put(out, v.x());
  put(out, v.y());
  put(out, v.z());
}

Vec3 get_vec3(std::istream& in) {
  Vec3 v;
  v.x() = get<double>(in);
  v.y() = get<double>(in);
  v.z() = get<double>(in);
  return v;
}

}  // namespace

void save_scene(const GaussianCloud& cloud, const EnvironmentLight& light,
                const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for write: " + path);
  out.write(kMagic, 4);
  put(out, kVersion);
  put(out, static_cast<uint64_t>(cloud.count()));
  for (const Gaussian& g : cloud.gaussians) {
    put_vec3(out, g.position);
    put(out, g.rotation.w());
    put(out, g.rotation.x());
    put(out, g.rotation.y());
    put(out, g.rotation.z());
    put_vec3(out, g.log_scale);
    put(out, g.opacity_logit);
    put_vec3(out, g.normal);
    put_vec3(out, g.diffuse_albedo);
    put(out, g.roughness);
    put_vec3(out, g.specular_albedo);
  }
  put(out, static_cast<uint32_t>(light.base.face_res()));
  for (const Vec3& t : light.base.texels()) put_vec3(out, t);
  if (!out) throw FormatError("scene write failed: " + path);
}

LoadedScene load_scene(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open scene: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad scene magic in " + path);
  const uint32_t version = get<uint32_t>(in);
  if (version != kVersion) throw FormatError("unsupported scene version");

  LoadedScene scene;
  const uint64_t count = get<uint64_t>(in);
  scene.cloud.gaussians.resize(count);
  for (uint64_t i = 0; i < count; ++i) {
    Gaussian& g = scene.cloud.gaussians[i];
    g.position = get_vec3(in);
    g.rotation.w() = get<double>(in);
    g.rotation.x() = get<double>(in);
    g.rotation.y() = get<double>(in);
    g.rotation.z() = get<double>(in);
    g.log_scale = get_vec3(in);
    g.opacity_logit = get<double>(in);
    g.normal = get_vec3(in);
    g.diffuse_albedo = get_vec3(in);
    g.roughness = get<double>(in);
    g.specular_albedo = get_vec3(in);
  }
  const uint32_t face_res = get<uint32_t>(in);
  scene.light.base = CubeMap(static_cast<int>(face_res));
  for (Vec3& t : scene.light.base.texels()) t = get_vec3(in);
  scene.light.dirty = true;
  return scene;
}

}  // namespace dgs
