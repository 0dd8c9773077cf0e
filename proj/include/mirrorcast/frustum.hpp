#pragma once

// View-dependent rendering parameters for the display behind the mirror.
//
// Camera conventions are OpenGL's: camera space looks down -z, NDC is
// [-1, 1]^3. The plain viewer camera sits at the eye with its axes aligned
// to the mirror frame, so the glass is a fixed-depth plane in camera space.
// The mirrored view composes that camera with the mirror reflection; its
// 3x3 block has determinant -1, so renderers must flip their front-face
// winding when using it.

#include "mirrorcast/core.hpp"
#include "mirrorcast/mirror_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mirrorcast {

struct TextureRect {
  double u0 = 0.0, v0 = 0.0, u1 = 1.0, v1 = 1.0;

  double width() const { return u1 - u0; }
  double height() const { return v1 - v0; }
};

struct RenderParams {
  Mat4 view_matrix = Mat4::Identity();
  Mat4 projection_matrix = Mat4::Identity();          // single-pass off-axis
  Mat4 texture_projection_matrix = Mat4::Identity();  // two-pass intermediate texture
  Vec4 oblique_clip_plane = Vec4::Zero();
  TextureRect texture_blit;
  double overscan = 1.0;  // of the intermediate texture, after widening
  double near = 0.05;
  double far = 100.0;
};

/// Cap tracker to eye offset in the tracker's local axes (-z forward, +y up).
inline const Vec3 kDefaultEyeOffset{0.0, -0.05, -0.10};

inline Vec3 eye_position(const Pose& viewer, const Vec3& eye_offset) {
  return viewer.position + viewer.orientation.normalized() * eye_offset;
}

inline void require_viewer_in_front(const Vec3& viewer_local, double min_depth = 0.0) {
  if (!viewer_local.allFinite()) {
    throw PoseValidityError("viewer position is not finite");
  }
  if (viewer_local.z() <= min_depth) {
    throw BehindMirrorError("viewer is on or behind the mirror plane");
  }
}

/// World -> camera for an eye at `eye_world` whose axes are the mirror's.
inline Mat4 plain_view(const Vec3& eye_world, const MirrorFrame& frame) {
  Mat4 v = Mat4::Identity();
  v.topLeftCorner<3, 3>() = frame.basis.transpose();
  v.topRightCorner<3, 1>() = -frame.basis.transpose() * eye_world;
  return v;
}

inline Mat4 mirrored_view(const Pose& viewer, const MirrorFrame& frame) {
  require_viewer_in_front(to_mirror_frame(viewer.position, frame));
  return plain_view(viewer.position, frame) * reflection_matrix(frame);
}

inline Mat4 frustum_matrix(double left, double right, double bottom, double top, double near,
                           double far) {
  Mat4 p = Mat4::Zero();
  p(0, 0) = 2.0 * near / (right - left);
  p(0, 2) = (right + left) / (right - left);
  p(1, 1) = 2.0 * near / (top - bottom);
  p(1, 2) = (top + bottom) / (top - bottom);
  p(2, 2) = -(far + near) / (far - near);
  p(2, 3) = -2.0 * far * near / (far - near);
  p(3, 2) = -1.0;
  return p;
}

inline void require_clip_range(double near, double far) {
  if (!(near > 0.0) || !(far > near) || !std::isfinite(far)) {
    throw ConfigError("clip distances must satisfy 0 < near < far");
  }
}

/// Generalized perspective whose near plane is pinned to the glass rectangle
/// as seen from the viewer; the mirror corners land on the NDC corners.
inline Mat4 offaxis_projection(const Vec3& viewer_local, const MirrorFrame& frame, double near,
                               double far) {
  require_clip_range(near, far);
  require_viewer_in_front(viewer_local, near * 1e-3);
  const double scale = near / viewer_local.z();
  return frustum_matrix((0.0 - viewer_local.x()) * scale, (frame.width - viewer_local.x()) * scale,
                        (0.0 - viewer_local.y()) * scale, (frame.height - viewer_local.y()) * scale,
                        near, far);
}

/// Symmetric frustum for the intermediate texture of the two-pass path. It
/// covers a glass-plane window `overscan` times the mirror size centered on
/// the foot of the viewer's perpendicular.
inline Mat4 texture_projection(const Vec3& viewer_local, const MirrorFrame& frame, double overscan,
                               double near, double far) {
  require_clip_range(near, far);
  require_viewer_in_front(viewer_local, near * 1e-3);
  if (!(overscan >= 1.0)) throw ConfigError("overscan must be >= 1");
  const double scale = near / viewer_local.z();
  const double half_w = 0.5 * overscan * frame.width * scale;
  const double half_h = 0.5 * overscan * frame.height * scale;
  return frustum_matrix(-half_w, half_w, -half_h, half_h, near, far);
}

/// Smallest overscan whose centered texture still contains the glass as
/// seen from `viewer_local`.
inline double required_overscan(const Vec3& viewer_local, const MirrorFrame& frame) {
  const double fx = viewer_local.x() / frame.width, fy = viewer_local.y() / frame.height;
  return std::max({1.0, 2.0 * fx, 2.0 * (1.0 - fx), 2.0 * fy, 2.0 * (1.0 - fy)});
}

/// Sub-rectangle of the overscan texture that shows exactly the glass.
inline TextureRect blit_rectangle(const Vec3& viewer_local, const MirrorFrame& frame,
                                  double overscan) {
  if (!(overscan >= 1.0)) throw ConfigError("overscan must be >= 1");
  require_viewer_in_front(viewer_local);
  TextureRect r;
  r.u0 = 0.5 - viewer_local.x() / (overscan * frame.width);
  r.v0 = 0.5 - viewer_local.y() / (overscan * frame.height);
  r.u1 = r.u0 + 1.0 / overscan;
  r.v1 = r.v0 + 1.0 / overscan;

  constexpr double kSlack = 1e-12;
  if (r.u0 < -kSlack || r.v0 < -kSlack || r.u1 > 1.0 + kSlack || r.v1 > 1.0 + kSlack) {
    throw InsufficientOverscanError("viewer offset needs overscan beyond " +
                                    std::to_string(overscan));
  }
  r.u0 = std::max(r.u0, 0.0);
  r.v0 = std::max(r.v0, 0.0);
  r.u1 = std::min(r.u1, 1.0);
  r.v1 = std::min(r.v1, 1.0);
  return r;
}

/// Glass plane in the camera space of `view`, normalized so the xyz part is
/// a unit vector. Glass points evaluate to 0, room-side scene points (the
/// ones whose reflections are drawn) to negative values, and points between
/// the mirrored camera and the glass, which must be clipped, to positive values.
inline Vec4 oblique_near_clip(const Mat4& view, const MirrorFrame& frame) {
  const Vec3 n = frame.normal();
  const Vec4 world_plane(-n.x(), -n.y(), -n.z(), n.dot(frame.origin));
  Vec4 cam = view.inverse().transpose() * world_plane;
  cam /= cam.head<3>().norm();
  return cam;
}

/// Homogeneous projection to NDC.
inline Vec3 project_to_ndc(const Mat4& projection, const Mat4& view, const Vec3& world) {
  const Vec4 clip = projection * view * world.homogeneous();
  return clip.head<3>() / clip.w();
}

/// `overscan` is a lower bound: it is widened to required_overscan when the
/// viewer stands further off-center than it allows.
inline RenderParams render_params(const Vec3& eye_world, const MirrorFrame& frame, double near,
                                  double far, double overscan) {
  const Vec3 eye_local = to_mirror_frame(eye_world, frame);
  require_viewer_in_front(eye_local, near * 1e-3);
  if (!(overscan >= 1.0)) throw ConfigError("overscan must be >= 1");
  overscan = std::max(overscan, required_overscan(eye_local, frame));
  RenderParams rp;
  rp.overscan = overscan;
  rp.near = near;
  rp.far = far;
  rp.view_matrix = mirrored_view(make_pose(EntityId::viewer, eye_world), frame);
  rp.projection_matrix = offaxis_projection(eye_local, frame, near, far);
  rp.texture_projection_matrix = texture_projection(eye_local, frame, overscan, near, far);
  rp.oblique_clip_plane = oblique_near_clip(rp.view_matrix, frame);
  rp.texture_blit = blit_rectangle(eye_local, frame, overscan);
  return rp;
}

}  // namespace mirrorcast
