// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/edit/texture_edit.hpp"

#include <map>

#include "dgs/core/random.hpp"
#include "dgs/edit/binding.hpp"
#include "dgs/train/adam.hpp"

namespace dgs {

std::vector<int> select_editable_gaussians(const GaussianCloud& cloud, const Camera& cam,
                                           const Image& mask, const Image& depth_map,
                                           double depth_tol) {
  std::vector<int> selected;
  for (const ProjectedGaussian& pg : project(cloud, cam)) {
    const int px = static_cast<int>(pg.mean2d.x());
    const int py = static_cast<int>(pg.mean2d.y());
    if (px < 0 || px >= cam.width || py < 0 || py >= cam.height) continue;
    if (mask.at(px, py) <= 0.5) continue;
    if (std::abs(pg.depth - depth_map.at(px, py)) > depth_tol) continue;
    selected.push_back(pg.source_index);
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

MeshRender render_vertex_colors(const TriangleMesh& mesh,
                                const std::vector<Vec3>& vertex_colors,
                                const std::vector<uint8_t>& valid, const Camera& cam,
                                int channels) {
  MeshRender out;
  out.color = Image(cam.width, cam.height, channels);
  out.coverage = Image(cam.width, cam.height, 1);
  out.depth = Image(cam.width, cam.height, 1);
  Image zbuf(cam.width, cam.height, 1, 1e300);

  std::vector<Vec3> cam_space(mesh.vertex_count());
  std::vector<Vec2> screen(mesh.vertex_count());
  for (size_t v = 0; v < mesh.vertex_count(); ++v) {
    cam_space[v] = cam.world_to_camera(mesh.vertices[v]);
    const double z = cam_space[v].z();
    screen[v] = Vec2(cam.fx * cam_space[v].x() / z + cam.cx,
                     cam.fy * cam_space[v].y() / z + cam.cy);
  }

  for (const auto& tri : mesh.triangles) {
    if (cam_space[tri[0]].z() < cam.near_z || cam_space[tri[1]].z() < cam.near_z ||
        cam_space[tri[2]].z() < cam.near_z)
      continue;
    const Vec2 a = screen[tri[0]], b = screen[tri[1]], c = screen[tri[2]];
    const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (std::abs(area) < 1e-12) continue;
    const bool tri_valid = valid[tri[0]] && valid[tri[1]] && valid[tri[2]];

    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}))));
    const int x1 = std::min(cam.width - 1,
                            static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}))));
    const int y1 = std::min(cam.height - 1,
                            static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}))));
    for (int py = y0; py <= y1; ++py) {
      for (int px = x0; px <= x1; ++px) {
        const Vec2 p(px + 0.5, py + 0.5);
        const double w0 = ((b - p).x() * (c - p).y() - (b - p).y() * (c - p).x()) / area;
        const double w1 = ((c - p).x() * (a - p).y() - (c - p).y() * (a - p).x()) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        // Perspective-correct interpolation via 1/z weights.
        const double iz = w0 / cam_space[tri[0]].z() + w1 / cam_space[tri[1]].z() +
                          w2 / cam_space[tri[2]].z();
        const double z = 1.0 / iz;
        if (z >= zbuf.at(px, py)) continue;
        zbuf.at(px, py) = z;
        out.depth.at(px, py) = z;
        out.coverage.at(px, py) = tri_valid ? 1.0 : 0.0;
        if (tri_valid) {
          const double c0 = w0 / cam_space[tri[0]].z() * z;
          const double c1 = w1 / cam_space[tri[1]].z() * z;
          const double c2 = w2 / cam_space[tri[2]].z() * z;
          for (int ch = 0; ch < channels; ++ch)
            out.color.at(px, py, ch) = c0 * vertex_colors[tri[0]][std::min(ch, 2)] +
                                       c1 * vertex_colors[tri[1]][std::min(ch, 2)] +
                                       c2 * vertex_colors[tri[2]][std::min(ch, 2)];
        }
      }
    }
  }
  return out;
}

namespace {

TriangleMesh subdivide_once(const TriangleMesh& mesh) {
  TriangleMesh out;
  out.vertices = mesh.vertices;
  std::map<std::pair<int, int>, int> midpoints;
  const auto midpoint = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = midpoints.find(key);
    if (it != midpoints.end()) return it->second;
    out.vertices.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
    const int idx = static_cast<int>(out.vertices.size()) - 1;
    midpoints.emplace(key, idx);
    return idx;
  };
  for (const auto& t : mesh.triangles) {
    const int m01 = midpoint(t[0], t[1]);
    const int m12 = midpoint(t[1], t[2]);
    const int m20 = midpoint(t[2], t[0]);
    out.triangles.push_back({t[0], m01, m20});
    out.triangles.push_back({m01, t[1], m12});
    out.triangles.push_back({m12, t[2], m20});
    out.triangles.push_back({m01, m12, m20});
  }
  return out;
}

double max_projected_edge(const TriangleMesh& mesh, const Camera& cam) {
  double longest = 0.0;
  for (const auto& t : mesh.triangles) {
    Vec2 s[3];
    bool in_front = true;
    for (int k = 0; k < 3; ++k) {
      const Vec3 pc = cam.world_to_camera(mesh.vertices[t[k]]);
      if (pc.z() < cam.near_z) {
        in_front = false;
        break;
      }
      s[k] = Vec2(cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy);
    }
    if (!in_front) continue;
    for (int k = 0; k < 3; ++k)
      longest = std::max(longest, (s[k] - s[(k + 1) % 3]).norm());
  }
  return longest;
}

Vec3 sample_bilinear(const Image& img, double px, double py) {
  const double fx = clamped(px - 0.5, 0.0, img.width() - 1.0);
  const double fy = clamped(py - 0.5, 0.0, img.height() - 1.0);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, img.width() - 1), y1 = std::min(y0 + 1, img.height() - 1);
  const double wx = fx - x0, wy = fy - y0;
  Vec3 out = Vec3::Zero();
  for (int c = 0; c < std::min(3, img.channels()); ++c)
    out[c] = (1 - wx) * (1 - wy) * img.at(x0, y0, c) + wx * (1 - wy) * img.at(x1, y0, c) +
             (1 - wx) * wy * img.at(x0, y1, c) + wx * wy * img.at(x1, y1, c);
  return out;
}

int attribute_channels(TextureEdit::Attribute attr) {
  return attr == TextureEdit::Attribute::kRoughness ? 1 : 3;
}

AttributeSelector attribute_selector(TextureEdit::Attribute attr) {
  switch (attr) {
    case TextureEdit::Attribute::kDiffuse:
      return [](const Gaussian& g, const ProjectedGaussian&, double* out) {
        out[0] = g.diffuse_albedo.x();
        out[1] = g.diffuse_albedo.y();
        out[2] = g.diffuse_albedo.z();
      };
    case TextureEdit::Attribute::kSpecular:
      return [](const Gaussian& g, const ProjectedGaussian&, double* out) {
        out[0] = g.specular_albedo.x();
        out[1] = g.specular_albedo.y();
        out[2] = g.specular_albedo.z();
      };
    default:
      return [](const Gaussian& g, const ProjectedGaussian&, double* out) {
        out[0] = g.roughness;
      };
  }
}

}  // namespace

EditResult optimize_texture_edit(const GaussianCloud& cloud, const TextureEdit& edit,
                                 const TriangleMesh& mesh, const EditOptimizeOptions& opts) {
  if (!edit.consistent()) throw ConsistencyError("texture edit images disagree with viewpoint");
  if (mesh.empty()) throw ConsistencyError("texture edit needs the proxy mesh");
  EditResult result;
  result.cloud = cloud;

  const int channels = attribute_channels(edit.attribute);
  const AttributeSelector selector = attribute_selector(edit.attribute);
  const RasterizeOptions ropts{16, opts.threads};

  // Current attribute map and blended depth from the edit view.
  const auto projected_edit = project(cloud, edit.viewpoint);
  const auto current = composite(projected_edit, cloud, channels, selector, edit.viewpoint, ropts);
  const auto depth = composite(
      projected_edit, cloud, 1,
      [](const Gaussian&, const ProjectedGaussian& pg, double* out) { out[0] = pg.depth; },
      edit.viewpoint, ropts);

  Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
  for (const Vec3& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const double extent = (hi - lo).norm();
  const double depth_tol = opts.depth_tol_fraction * extent;
  result.selected =
      select_editable_gaussians(cloud, edit.viewpoint, edit.mask, depth.attribute, depth_tol);
  if (result.selected.empty()) return result;  // no-op edit

  // Subdivide the proxy until its projected edges reach pixel footprint.
  TriangleMesh proxy = mesh;
  for (int round = 0; round < 5 && proxy.triangle_count() < 400000; ++round) {
    if (max_projected_edge(proxy, edit.viewpoint) <= 1.5) break;
    proxy = subdivide_once(proxy);
  }

  // Bake vertex colors: edited content where visible and masked, the current
  // attribute where visible, unknown elsewhere.
  std::vector<Vec3> dummy(proxy.vertex_count(), Vec3::Zero());
  std::vector<uint8_t> all_valid(proxy.vertex_count(), 1);
  const MeshRender edit_depth =
      render_vertex_colors(proxy, dummy, all_valid, edit.viewpoint, 1);

  std::vector<Vec3> colors(proxy.vertex_count(), Vec3::Zero());
  std::vector<uint8_t> valid(proxy.vertex_count(), 0);
  for (size_t v = 0; v < proxy.vertex_count(); ++v) {
    const Vec3 pc = edit.viewpoint.world_to_camera(proxy.vertices[v]);
    if (pc.z() < edit.viewpoint.near_z) continue;
    const double px = edit.viewpoint.fx * pc.x() / pc.z() + edit.viewpoint.cx;
    const double py = edit.viewpoint.fy * pc.y() / pc.z() + edit.viewpoint.cy;
    if (px < 0 || px >= edit.viewpoint.width || py < 0 || py >= edit.viewpoint.height) continue;
    const int ix = static_cast<int>(px), iy = static_cast<int>(py);
    const double zbuf = edit_depth.depth.at(ix, iy);
    if (zbuf <= 0.0 || std::abs(pc.z() - zbuf) > 0.02 * extent) continue;  // occluded
    valid[v] = 1;
    colors[v] = edit.mask.at(ix, iy) > 0.5 ? sample_bilinear(edit.edited, px, py)
                                           : sample_bilinear(current.attribute, px, py);
  }

  // View set: the edit view plus random views on the view sphere within 60
  // degrees, all looking at the proxy centroid.
  std::vector<Camera> views = {edit.viewpoint};
  if (!opts.input_view_only) {
    Vec3 centroid = Vec3::Zero();
    for (const Vec3& v : proxy.vertices) centroid += v;
    centroid /= static_cast<double>(proxy.vertex_count());
    const Vec3 eye0 = edit.viewpoint.camera_center();
    const double dist = (eye0 - centroid).norm();
    const Vec3 dir0 = (eye0 - centroid).normalized();
    Pcg32 rng(opts.seed, 17);
    Vec3 tangent, bitangent;
    make_basis(dir0, tangent, bitangent);
    for (int k = 0; k < edit.random_views; ++k) {
      const double angle = rng.uniform(0.0, kPi / 3.0);  // <= 60 degrees
      const double azimuth = rng.uniform(0.0, 2.0 * kPi);
      const Vec3 dir = (std::cos(angle) * dir0 +
                        std::sin(angle) * (std::cos(azimuth) * tangent +
                                           std::sin(azimuth) * bitangent))
                           .normalized();
      const Vec3 up = std::abs(dir.y()) > 0.95 ? Vec3::UnitX() : Vec3::UnitY();
      Camera cam = Camera::look_at(centroid + dist * dir, centroid, up, edit.viewpoint.fx,
                                   edit.viewpoint.width, edit.viewpoint.height);
      views.push_back(cam);
    }
  }

  struct ViewData {
    Camera cam;
    std::vector<ProjectedGaussian> projected;
    MeshRender target;
  };
  std::vector<ViewData> view_data;
  for (size_t vi = 0; vi < views.size(); ++vi) {
    ViewData vd;
    vd.cam = views[vi];
    vd.projected = project(result.cloud, vd.cam);
    if (vi == 0) {
      // Input view: the target is the edited map itself (painted region) over
      // the current attribute map, so an unedited input is an exact fixed
      // point. The mesh detour only augments the random views.
      vd.target.color = Image(vd.cam.width, vd.cam.height, channels);
      vd.target.coverage = Image(vd.cam.width, vd.cam.height, 1);
      for (int y = 0; y < vd.cam.height; ++y)
        for (int x = 0; x < vd.cam.width; ++x) {
          const bool painted = edit.mask.at(x, y) > 0.5;
          for (int c = 0; c < channels; ++c)
            vd.target.color.at(x, y, c) =
                painted ? edit.edited.at(x, y, std::min(c, edit.edited.channels() - 1))
                        : current.attribute.at(x, y, c);
          vd.target.coverage.at(x, y) = current.alpha.at(x, y) > 0.5 ? 1.0 : 0.0;
        }
    } else {
      vd.target = render_vertex_colors(proxy, colors, valid, vd.cam, channels);
    }
    view_data.push_back(std::move(vd));
  }

  // L1 fit of the selected splats' attribute over the view set.
  std::vector<uint8_t> is_selected(cloud.count(), 0);
  for (const int i : result.selected) is_selected[i] = 1;
  const size_t n_params = result.selected.size() * channels;
  Adam adam;
  adam.resize(n_params);

  const auto view_loss = [&](const ViewData& vd, Image* d_map_out) {
    const auto r = composite(vd.projected, result.cloud, channels, selector, vd.cam, ropts);
    double loss = 0.0;
    size_t count = 0;
    if (d_map_out) *d_map_out = Image(vd.cam.width, vd.cam.height, channels);
    for (int y = 0; y < vd.cam.height; ++y)
      for (int x = 0; x < vd.cam.width; ++x) {
        if (vd.target.coverage.at(x, y) <= 0.5 || r.alpha.at(x, y) <= 0.5) continue;
        for (int c = 0; c < channels; ++c) {
          const double diff = r.attribute.at(x, y, c) - vd.target.color.at(x, y, c);
          loss += std::abs(diff);
          if (d_map_out && diff != 0.0) d_map_out->at(x, y, c) = diff > 0 ? 1.0 : -1.0;
        }
        ++count;
      }
    if (count > 0) {
      loss /= static_cast<double>(count * channels);
      if (d_map_out)
        for (double& v : d_map_out->data()) v /= static_cast<double>(count * channels);
    }
    return loss;
  };

  for (int iter = 0; iter < opts.iterations; ++iter) {
    double total = 0.0;
    std::vector<double> grads(n_params, 0.0);
    for (const ViewData& vd : view_data) {
      Image d_map;
      total += view_loss(vd, &d_map);

      std::vector<double> attrs(vd.projected.size() * channels);
      for (size_t i = 0; i < vd.projected.size(); ++i)
        selector(result.cloud[vd.projected[i].source_index], vd.projected[i],
                 &attrs[i * channels]);
      std::vector<double> d_attrs(vd.projected.size() * channels, 0.0);
      std::vector<double> d_logit(vd.projected.size(), 0.0);
      composite_backward_engine(vd.projected, attrs.data(), channels, result.cloud,
                                d_map.data().data(), nullptr, vd.cam.width, vd.cam.height,
                                ropts, d_attrs.data(), d_logit.data());
      // Scatter into the selected-parameter vector.
      std::vector<int> param_index(cloud.count(), -1);
      for (size_t s = 0; s < result.selected.size(); ++s)
        param_index[result.selected[s]] = static_cast<int>(s);
      for (size_t i = 0; i < vd.projected.size(); ++i) {
        const int src = vd.projected[i].source_index;
        if (param_index[src] < 0) continue;
        for (int c = 0; c < channels; ++c)
          grads[param_index[src] * channels + c] += d_attrs[i * channels + c];
      }
    }
    if (iter == 0) result.initial_loss = total;
    result.final_loss = total;

    std::vector<double> params(n_params);
    for (size_t s = 0; s < result.selected.size(); ++s) {
      Gaussian& g = result.cloud.gaussians[result.selected[s]];
      for (int c = 0; c < channels; ++c)
        params[s * channels + c] =
            edit.attribute == TextureEdit::Attribute::kDiffuse ? g.diffuse_albedo[c]
            : edit.attribute == TextureEdit::Attribute::kSpecular ? g.specular_albedo[c]
                                                                  : g.roughness;
    }
    adam.step(params.data(), grads.data(), n_params, opts.learning_rate);
    for (size_t s = 0; s < result.selected.size(); ++s) {
      Gaussian& g = result.cloud.gaussians[result.selected[s]];
      for (int c = 0; c < channels; ++c) {
        const double v = params[s * channels + c];
        if (edit.attribute == TextureEdit::Attribute::kDiffuse)
          g.diffuse_albedo[c] = clamp01(v);
        else if (edit.attribute == TextureEdit::Attribute::kSpecular)
          g.specular_albedo[c] = clamp01(v);
        else
          g.roughness = clamped(v, kMinRoughness, 1.0);
      }
    }
  }
  return result;
}

}  // namespace dgs
