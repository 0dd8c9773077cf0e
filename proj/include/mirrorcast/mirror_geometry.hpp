#pragma once

// Planar mirror coordinate frames, the per-axis reflection-point solver and
// the world-space reflection matrix.
//
// Mirror-local frame: origin at the bottom-left corner of the glass, x along
// the width, y along the height, z the outward normal into the room. The
// glass is the z = 0 plane; everything the solver looks at must have z > 0.

#include "mirrorcast/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mirrorcast {

struct MirrorFrame {
  Vec3 origin = Vec3::Zero();
  Mat3 basis = Mat3::Identity();  // columns: x (width), y (height), z (normal)
  double width = 1.0;
  double height = 1.0;

  Vec3 x_axis() const { return basis.col(0); }
  Vec3 y_axis() const { return basis.col(1); }
  Vec3 normal() const { return basis.col(2); }
};

/// Rigid offset from the tracker mounted on the mirror to the frame origin,
/// expressed in the tracker's local axes.
struct MountOffset {
  Vec3 translation = Vec3::Zero();
  Quat rotation = Quat::Identity();
};

/// Tracker centered on the top edge, axes aligned with the glass, facing the room.
inline MountOffset default_mount_offset(double width, double height) {
  return MountOffset{Vec3(-0.5 * width, -height, 0.0), Quat::Identity()};
}

inline constexpr double kFrameOrthonormalTolerance = 1e-9;

inline void validate(const MirrorFrame& frame) {
  if (!(frame.width > 0.0) || !(frame.height > 0.0) || !std::isfinite(frame.width) ||
      !std::isfinite(frame.height)) {
    throw CalibrationError("mirror width and height must be positive and finite");
  }
  if (!frame.origin.allFinite() || !frame.basis.allFinite()) {
    throw CalibrationError("mirror frame contains non-finite values");
  }
  const Mat3 gram = frame.basis.transpose() * frame.basis;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > kFrameOrthonormalTolerance) {
    throw CalibrationError("mirror basis is not orthonormal");
  }
  if (frame.basis.determinant() < 0.0) {
    throw CalibrationError("mirror basis is not right-handed");
  }
}

inline MirrorFrame mirror_frame_from_pose(const Pose& tracker, const MountOffset& offset,
                                          double width, double height) {
  if (tracker.entity != EntityId::mirror) {
    throw CalibrationError("mirror frame requires a pose of the mirror tracker");
  }
  if (!is_unit(tracker.orientation)) {
    throw CalibrationError("mirror tracker orientation is not a unit quaternion");
  }
  if (!is_unit(offset.rotation)) {
    throw CalibrationError("mount offset rotation is not a unit quaternion");
  }
  if (!tracker.position.allFinite() || !offset.translation.allFinite()) {
    throw CalibrationError("mirror tracker pose contains non-finite values");
  }
  // Renormalize away the (tolerated) quaternion drift so the basis is
  // orthonormal to machine precision.
  const Quat tracker_rot = tracker.orientation.normalized();
  const Quat mount_rot = offset.rotation.normalized();

  MirrorFrame frame;
  frame.origin = tracker.position + tracker_rot * offset.translation;
  frame.basis = (tracker_rot * mount_rot).toRotationMatrix();
  frame.width = width;
  frame.height = height;
  validate(frame);
  return frame;
}

inline Vec3 to_mirror_frame(const Vec3& p_world, const MirrorFrame& frame) {
  return frame.basis.transpose() * (p_world - frame.origin);
}

inline Vec3 from_mirror_frame(const Vec3& p_local, const MirrorFrame& frame) {
  return frame.origin + frame.basis * p_local;
}

// ---------------------------------------------------------------------------
// Reflection point
// ---------------------------------------------------------------------------

/// A point reduced to one mirror axis: coordinate along the glass and depth
/// in front of it.
struct PlanarPoint {
  double coord = 0.0;
  double depth = 0.0;
};

enum class ReductionPlane { xz, yz };

struct ReflectionPoint2D {
  double s = 0.0;
  ReductionPlane plane = ReductionPlane::xz;
};

/// s^2 * a + 2 s * half_b + c = 0, obtained by squaring the equal-angle
/// condition v_z / |V - S| = p_z / |P - S|. The discriminant factors as
/// (p_z v_z (p - v))^2, which is kept separately as sqrt_disc.
struct ReflectionQuadratic {
  long double a = 0;
  long double half_b = 0;
  long double c = 0;
  long double sqrt_disc = 0;
};

inline ReflectionQuadratic reflection_quadratic(PlanarPoint p, PlanarPoint v) {
  const long double px = p.coord, pz = p.depth, vx = v.coord, vz = v.depth;
  ReflectionQuadratic q;
  q.a = (pz - vz) * (pz + vz);
  q.half_b = px * vz * vz - vx * pz * pz;
  q.c = (vx * pz - px * vz) * (vx * pz + px * vz);
  q.sqrt_disc = pz * vz * std::fabs(px - vx);
  return q;
}

struct ReflectionRoots {
  int count = 0;  // 1 for the equal-depth (linear) case, 2 otherwise
  std::array<double, 2> values{};
};

/// Relative threshold on |p_z^2 - v_z^2| below which the equal-depth branch is used.
inline constexpr double kEqualDepthRelTolerance = 1e-9;

inline bool use_equal_depth_branch(PlanarPoint p, PlanarPoint v) {
  const double pz2 = p.depth * p.depth, vz2 = v.depth * v.depth;
  return std::abs(pz2 - vz2) < kEqualDepthRelTolerance * std::max(pz2, vz2);
}

/// All real roots of the squared reflection equation.
///
/// With distinct depths both roots of the reduced quadratic formula are
/// returned; one lies between p and v, the other is the external division
/// point. In the near-equal-depth branch only the root that stays finite as
/// a -> 0 is returned; at a == 0 it equals the linear solution
/// (p_x^2 v_z^2 - v_x^2 p_z^2) / (2 (p_x v_z^2 - v_x p_z^2)).
inline ReflectionRoots reflection_roots(PlanarPoint p, PlanarPoint v) {
  ReflectionRoots out;
  if (p.coord == v.coord) {
    out.count = 1;
    out.values = {p.coord, p.coord};
    return out;
  }
  if (p.depth == v.depth) {
    out.count = 1;
    out.values[0] = 0.5 * (p.coord + v.coord);
    return out;
  }
  const ReflectionQuadratic q = reflection_quadratic(p, v);
  // Stable evaluation of (-half_b +/- sqrt_disc) / a: never subtract nearly
  // equal quantities.
  const long double sign = q.half_b >= 0 ? 1.0L : -1.0L;
  const long double big = -(q.half_b + sign * q.sqrt_disc);
  const long double finite_root = q.c / big;
  if (use_equal_depth_branch(p, v)) {
    out.count = 1;
    out.values[0] = static_cast<double>(finite_root);
    return out;
  }
  out.count = 2;
  out.values[0] = static_cast<double>(big / q.a);
  out.values[1] = static_cast<double>(finite_root);
  return out;
}

/// |angle(incident, normal) - angle(reflected, normal)| in radians for a
/// candidate reflection coordinate s.
inline double equal_angle_residual(PlanarPoint p, PlanarPoint v, double s) {
  const double incident = std::atan2(std::abs(p.coord - s), p.depth);
  const double reflected = std::atan2(std::abs(v.coord - s), v.depth);
  return std::abs(incident - reflected);
}

inline void require_in_front(PlanarPoint pt, const char* who) {
  if (!std::isfinite(pt.coord) || !std::isfinite(pt.depth)) {
    throw PoseValidityError(std::string(who) + " has non-finite coordinates");
  }
  if (pt.depth <= 0.0) {
    throw BehindMirrorError(std::string(who) + " is on or behind the mirror plane");
  }
}

/// Solves the law of reflection in one reduction plane: the point s on the
/// glass where the viewer sees the player's reflection. Of the candidate
/// roots the one with min(p, v) <= s <= max(p, v) is selected.
inline ReflectionPoint2D solve_reflection_1d(PlanarPoint p, PlanarPoint v,
                                             ReductionPlane plane = ReductionPlane::xz) {
  if (p.coord == v.coord && p.depth == v.depth && p.depth == 0.0) {
    throw DegenerateGeometryError("player and viewer coincide on the glass");
  }
  require_in_front(p, "player");
  require_in_front(v, "viewer");

  const double lo = std::min(p.coord, v.coord);
  const double hi = std::max(p.coord, v.coord);
  const ReflectionRoots roots = reflection_roots(p, v);

  double best = roots.values[0];
  if (roots.count == 2) {
    auto outside = [&](double s) { return s < lo ? lo - s : (s > hi ? s - hi : 0.0); };
    // Admit a few ulps of slack so that rounding cannot reject the true root.
    const double slack = 8.0 * std::numeric_limits<double>::epsilon() *
                         std::max({1.0, std::abs(lo), std::abs(hi)});
    const bool in0 = outside(roots.values[0]) <= slack;
    const bool in1 = outside(roots.values[1]) <= slack;
    if (in0 && in1) {
      best = equal_angle_residual(p, v, roots.values[0]) <= equal_angle_residual(p, v, roots.values[1])
                 ? roots.values[0]
                 : roots.values[1];
    } else if (in1 || (!in0 && outside(roots.values[1]) < outside(roots.values[0]))) {
      best = roots.values[1];
    }
  }
  return ReflectionPoint2D{std::clamp(best, lo, hi), plane};
}

/// (s_x, s_y) on the glass for a player and viewer given in mirror-local
/// coordinates; s_z is 0 by construction of the frame.
inline Vec2 reflect_point_on_mirror(const Vec3& player_local, const Vec3& viewer_local) {
  const double sx = solve_reflection_1d({player_local.x(), player_local.z()},
                                        {viewer_local.x(), viewer_local.z()}, ReductionPlane::xz)
                        .s;
  const double sy = solve_reflection_1d({player_local.y(), player_local.z()},
                                        {viewer_local.y(), viewer_local.z()}, ReductionPlane::yz)
                        .s;
  return Vec2(sx, sy);
}

/// Householder reflection about the glass plane, world frame, homogeneous.
inline Mat4 reflection_matrix(const MirrorFrame& frame) {
  const Vec3 n = frame.normal();
  const double d = n.dot(frame.origin);
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = Mat3::Identity() - 2.0 * n * n.transpose();
  m.topRightCorner<3, 1>() = 2.0 * d * n;
  return m;
}

}  // namespace mirrorcast
