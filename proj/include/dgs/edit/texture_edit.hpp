// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dgs/core/mesh.hpp"
#include "dgs/raster/gbuffer.hpp"

namespace dgs {

/// A texture edit painted from one viewpoint.
struct TextureEdit {
  enum class Attribute { kDiffuse, kRoughness, kSpecular };

  Camera viewpoint;
  Image edited;       // RGB (or single channel for roughness), viewpoint-sized
  Image mask;         // 1 channel, binary
  Attribute attribute = Attribute::kDiffuse;
  int random_views = 8;

  bool consistent() const {
    return edited.width() == viewpoint.width && edited.height() == viewpoint.height &&
           mask.width() == viewpoint.width && mask.height() == viewpoint.height;
  }
};

/// Splats whose projected center lands in the mask and whose depth agrees
/// with the rendered depth map within depth_tol.
std::vector<int> select_editable_gaussians(const GaussianCloud& cloud, const Camera& cam,
                                           const Image& mask, const Image& depth_map,
                                           double depth_tol);

/// Minimal z-buffer rasterizer for vertex-colored meshes (no lighting; the
/// attributes are lighting-free quantities). `valid` marks vertices whose
/// color is known; pixels touching unknown vertices are masked out.
struct MeshRender {
  Image color;     // channels follow the vertex colors
  Image coverage;  // 1 where a triangle with fully valid corners was hit
  Image depth;     // camera-space z, 0 where empty
};
MeshRender render_vertex_colors(const TriangleMesh& mesh,
                                const std::vector<Vec3>& vertex_colors,
                                const std::vector<uint8_t>& valid, const Camera& cam,
                                int channels);

struct EditOptimizeOptions {
  int iterations = 200;
  double learning_rate = 0.05;
  double depth_tol_fraction = 0.02;  // of the scene extent
  uint64_t seed = 0;
  int threads = 1;
  bool input_view_only = false;  // single-view mode for ablations
};

struct EditResult {
  GaussianCloud cloud;
  std::vector<int> selected;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Multi-view texture-edit optimization: the edited content is unprojected
/// onto the (subdivided) mesh as vertex colors, rendered from the input and
/// random viewpoints, and the selected splats' target attribute is fitted to
/// those renders by L1 descent. All other attributes and all non-selected
/// splats are bit-unchanged.
EditResult optimize_texture_edit(const GaussianCloud& cloud, const TextureEdit& edit,
                                 const TriangleMesh& mesh,
                                 const EditOptimizeOptions& opts = {});

}  // namespace dgs
