// Copyright Contributors to the dgs project
// SPDX-License-Identifier: Apache-2.0

#include "dgs/ibl/cubemap.hpp"

namespace dgs {

CubeMap::CubeMap(int face_res, const Vec3& fill)
    : face_res_(face_res), texels_(static_cast<size_t>(6) * face_res * face_res, fill) {}

void CubeMap::direction_to_face_uv(const Vec3& dir, int& face, double& u, double& v) {
  const double ax = std::abs(dir.x()), ay = std::abs(dir.y()), az = std::abs(dir.z());
  double sc, tc, ma;
  if (ax >= ay && ax >= az) {
    ma = ax;
    if (dir.x() > 0) {
      face = 0;
      sc = -dir.z();
      tc = -dir.y();
    } else {
      face = 1;
      sc = dir.z();
      tc = -dir.y();
    }
  } else if (ay >= ax && ay >= az) {
    ma = ay;
    if (dir.y() > 0) {
      face = 2;
      sc = dir.x();
      tc = dir.z();
    } else {
      face = 3;
      sc = dir.x();
      tc = -dir.z();
    }
  } else {
    ma = az;
    if (dir.z() > 0) {
      face = 4;
      sc = dir.x();
      tc = -dir.y();
    } else {
      face = 5;
      sc = -dir.x();
      tc = -dir.y();
    }
  }
  u = 0.5 * (sc / ma + 1.0);
  v = 0.5 * (tc / ma + 1.0);
}

Vec3 CubeMap::face_uv_to_direction(int face, double u, double v) {
  const double sc = 2.0 * u - 1.0;
  const double tc = 2.0 * v - 1.0;
  Vec3 d;
  switch (face) {
    case 0: d = Vec3(1.0, -tc, -sc); break;
    case 1: d = Vec3(-1.0, -tc, sc); break;
    case 2: d = Vec3(sc, 1.0, tc); break;
    case 3: d = Vec3(sc, -1.0, -tc); break;
    case 4: d = Vec3(sc, -tc, 1.0); break;
    default: d = Vec3(-sc, -tc, -1.0); break;
  }
  return d.normalized();
}

Vec3 CubeMap::texel_direction(int face, int x, int y) const {
  return face_uv_to_direction(face, (x + 0.5) / face_res_, (y + 0.5) / face_res_);
}

namespace {

struct BilinearTaps {
  int x0, x1, y0, y1;
  double wx, wy;  // weight of the x1 / y1 taps
};

BilinearTaps face_taps(int res, double u, double v) {
  BilinearTaps t;
  const double fx = clamped(u * res - 0.5, 0.0, static_cast<double>(res - 1));
  const double fy = clamped(v * res - 0.5, 0.0, static_cast<double>(res - 1));
  t.x0 = static_cast<int>(fx);
  t.y0 = static_cast<int>(fy);
  t.x1 = std::min(t.x0 + 1, res - 1);
  t.y1 = std::min(t.y0 + 1, res - 1);
  t.wx = fx - t.x0;
  t.wy = fy - t.y0;
  return t;
}

}  // namespace

Vec3 CubeMap::sample(const Vec3& dir) const {
  int face;
  double u, v;
  direction_to_face_uv(dir, face, u, v);
  const BilinearTaps t = face_taps(face_res_, u, v);
  return (1 - t.wx) * (1 - t.wy) * texel(face, t.x0, t.y0) +
         t.wx * (1 - t.wy) * texel(face, t.x1, t.y0) +
         (1 - t.wx) * t.wy * texel(face, t.x0, t.y1) +
         t.wx * t.wy * texel(face, t.x1, t.y1);
}

void CubeMap::splat_gradient(const Vec3& dir, const Vec3& grad) {
  int face;
  double u, v;
  direction_to_face_uv(dir, face, u, v);
  const BilinearTaps t = face_taps(face_res_, u, v);
  texel(face, t.x0, t.y0) += (1 - t.wx) * (1 - t.wy) * grad;
  texel(face, t.x1, t.y0) += t.wx * (1 - t.wy) * grad;
  texel(face, t.x0, t.y1) += (1 - t.wx) * t.wy * grad;
  texel(face, t.x1, t.y1) += t.wx * t.wy * grad;
}

namespace {

// Axis/sign tables matching direction_to_face_uv: sc = s_sign*dir[s_axis],
// tc = t_sign*dir[t_axis], ma = m_sign*dir[m_axis].
struct FaceAxes {
  int s_axis, t_axis, m_axis;
  double s_sign, t_sign, m_sign;
};
constexpr FaceAxes kFaceAxes[6] = {
    {2, 1, 0, -1, -1, 1},  // +x
    {2, 1, 0, 1, -1, -1},  // -x
    {0, 2, 1, 1, 1, 1},    // +y
    {0, 2, 1, 1, -1, -1},  // -y
    {0, 1, 2, 1, -1, 1},   // +z
    {0, 1, 2, -1, -1, -1}, // -z
};

}  // namespace

Vec3 CubeMap::sample_with_jacobian(const Vec3& dir, Mat3& jacobian) const {
  int face;
  double u, v;
  direction_to_face_uv(dir, face, u, v);
  const FaceAxes& ax = kFaceAxes[face];
  const double sc = ax.s_sign * dir[ax.s_axis];
  const double tc = ax.t_sign * dir[ax.t_axis];
  const double ma = ax.m_sign * dir[ax.m_axis];

  // u = (sc/ma + 1)/2, v = (tc/ma + 1)/2.
  Vec3 du = Vec3::Zero(), dv = Vec3::Zero();
  du[ax.s_axis] += 0.5 * ax.s_sign / ma;
  du[ax.m_axis] -= 0.5 * sc * ax.m_sign / (ma * ma);
  dv[ax.t_axis] += 0.5 * ax.t_sign / ma;
  dv[ax.m_axis] -= 0.5 * tc * ax.m_sign / (ma * ma);

  const BilinearTaps t = face_taps(face_res_, u, v);
  const Vec3 c00 = texel(face, t.x0, t.y0);
  const Vec3 c10 = texel(face, t.x1, t.y0);
  const Vec3 c01 = texel(face, t.x0, t.y1);
  const Vec3 c11 = texel(face, t.x1, t.y1);
  const Vec3 value = (1 - t.wx) * (1 - t.wy) * c00 + t.wx * (1 - t.wy) * c10 +
                     (1 - t.wx) * t.wy * c01 + t.wx * t.wy * c11;

  // d(value)/du is res * d/d(wx) away from the edge clamp, zero at it.
  const double fu = u * face_res_ - 0.5;
  const double fv = v * face_res_ - 0.5;
  const bool u_live = fu > 0.0 && fu < face_res_ - 1;
  const bool v_live = fv > 0.0 && fv < face_res_ - 1;
  const Vec3 dval_du =
      u_live ? Vec3(face_res_ * ((1 - t.wy) * (c10 - c00) + t.wy * (c11 - c01))) : Vec3::Zero();
  const Vec3 dval_dv =
      v_live ? Vec3(face_res_ * ((1 - t.wx) * (c01 - c00) + t.wx * (c11 - c10))) : Vec3::Zero();

  jacobian = dval_du * du.transpose() + dval_dv * dv.transpose();
  return value;
}

bool CubeMap::finite_nonnegative() const {
  for (const Vec3& t : texels_)
    for (int c = 0; c < 3; ++c)
      if (!std::isfinite(t[c]) || t[c] < 0.0) return false;
  return true;
}

Image cubemap_to_equirect(const CubeMap& map, int height) {
  const int width = 2 * height;
  Image out(width, height, 3);
  for (int y = 0; y < height; ++y) {
    const double theta = kPi * (y + 0.5) / height;  // 0 at +y pole
    for (int x = 0; x < width; ++x) {
      const double phi = 2.0 * kPi * (x + 0.5) / width - kPi;
      const Vec3 dir(std::sin(theta) * std::sin(phi), std::cos(theta),
                     -std::sin(theta) * std::cos(phi));
      out.set_rgb(x, y, map.sample(dir));
    }
  }
  return out;
}

CubeMap equirect_to_cubemap(const Image& latlong, int face_res) {
  if (latlong.channels() != 3) throw ConsistencyError("equirect map must be RGB");
  CubeMap out(face_res);
  const int w = latlong.width(), h = latlong.height();
  for (int face = 0; face < 6; ++face) {
    for (int y = 0; y < face_res; ++y) {
      for (int x = 0; x < face_res; ++x) {
        const Vec3 d = out.texel_direction(face, x, y);
        const double theta = std::acos(clamped(d.y(), -1.0, 1.0));
        const double phi = std::atan2(d.x(), -d.z());
        double fx = (phi + kPi) / (2.0 * kPi) * w - 0.5;
        double fy = theta / kPi * h - 0.5;
        fx = clamped(fx, 0.0, w - 1.0);
        fy = clamped(fy, 0.0, h - 1.0);
        const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
        const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
        const double wx = fx - x0, wy = fy - y0;
        Vec3 c = Vec3::Zero();
        c += (1 - wx) * (1 - wy) * Vec3(latlong.rgb(x0, y0));
        c += wx * (1 - wy) * Vec3(latlong.rgb(x1, y0));
        c += (1 - wx) * wy * Vec3(latlong.rgb(x0, y1));
        c += wx * wy * Vec3(latlong.rgb(x1, y1));
        out.texel(face, x, y) = c;
      }
    }
  }
  return out;
}

}  // namespace dgs
