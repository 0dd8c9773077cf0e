#pragma once

// Screen-space overlay that darkens the display where the player's physical
// reflection is seen, so the glass turns reflective there.

#include "mirrorcast/core.hpp"
#include "mirrorcast/mirror_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace mirrorcast {

enum class SilhouetteVariant { default_oval, transparent_oval, narrow_oval, body_with_arms };

constexpr std::string_view to_string(SilhouetteVariant v) {
  switch (v) {
    case SilhouetteVariant::default_oval: return "default_oval";
    case SilhouetteVariant::transparent_oval: return "transparent_oval";
    case SilhouetteVariant::narrow_oval: return "narrow_oval";
    case SilhouetteVariant::body_with_arms: return "body_with_arms";
  }
  return "unknown";
}

inline std::optional<SilhouetteVariant> variant_from_string(std::string_view name) {
  for (auto v : {SilhouetteVariant::default_oval, SilhouetteVariant::transparent_oval,
                 SilhouetteVariant::narrow_oval, SilhouetteVariant::body_with_arms}) {
    if (to_string(v) == name) return v;
  }
  return std::nullopt;
}

struct SilhouetteShape {
  SilhouetteVariant variant = SilhouetteVariant::default_oval;
  double opacity = 1.0;      // 1 = fully black
  double width_scale = 1.0;  // multiplies the overlay half-width

  static SilhouetteShape preset(SilhouetteVariant v) {
    switch (v) {
      case SilhouetteVariant::transparent_oval: return {v, 0.5, 1.0};
      case SilhouetteVariant::narrow_oval: return {v, 1.0, 0.5};
      default: return {v, 1.0, 1.0};
    }
  }

  void validate() const {
    if (!(opacity >= 0.0 && opacity <= 1.0)) {
      throw ConfigError("silhouette opacity must be within [0, 1]");
    }
    if (!(width_scale > 0.0 && width_scale <= 4.0)) {
      throw ConfigError("silhouette width_scale must be within (0, 4]");
    }
  }
};

/// Body dimensions used to turn tracked points into overlay extents.
struct BodyModel {
  double shoulder_half_width = 0.25;
  double head_radius = 0.12;
  double arm_radius = 0.06;

  void validate() const {
    if (!(shoulder_half_width > 0.0) || !(head_radius > 0.0) || !(arm_radius > 0.0)) {
      throw ConfigError("body model dimensions must be positive");
    }
  }
};

/// Vertical drop from the head anchor to the shoulder line.
inline constexpr double kShoulderDrop = 0.25;

/// Axis-aligned box on the glass, meters, mirror-local.
struct GlassBox {
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
};

/// Segment with a radius. Coordinates follow the container: meters on the
/// glass from arm_capsules, normalized screen units inside a polygon (there
/// the radius is normalized by the mirror width).
struct Capsule {
  Vec2 a = Vec2::Zero();
  Vec2 b = Vec2::Zero();
  double radius = 0.0;
};

/// Normalized screen coordinates: [0,1]^2 is the glass, origin bottom-left.
struct SilhouettePolygon {
  std::vector<Vec2> outline;
  double opacity = 1.0;
  std::vector<Capsule> arm_capsules;
};

/// Outline vertices are kept within this extended square.
inline constexpr double kScreenOverhangMin = -0.5;
inline constexpr double kScreenOverhangMax = 1.5;
inline constexpr int kDefaultOvalVertices = 64;

/// Synthesizes a feet pose when no foot tracker exists: the head dropped to
/// the floor height, world frame.
inline Pose feet_from_head(const Pose& head, double floor_y) {
  Pose feet = head;
  feet.entity = EntityId::player_feet;
  feet.position.y() = floor_y;
  return feet;
}

inline GlassBox silhouette_anchor_box(const Pose& player_head, const Pose& player_feet,
                                      const Pose& viewer, const MirrorFrame& frame,
                                      const BodyModel& body) {
  const Vec3 head = to_mirror_frame(player_head.position, frame);
  const Vec3 feet = to_mirror_frame(player_feet.position, frame);
  const Vec3 eye = to_mirror_frame(viewer.position, frame);
  if (head.y() < feet.y()) {
    throw PoseValidityError("player head is below the player feet");
  }

  // Each box edge is the reflection of one extremal body point.
  const PlanarPoint eye_x{eye.x(), eye.z()};
  const PlanarPoint eye_y{eye.y(), eye.z()};
  const double left =
      solve_reflection_1d({head.x() - body.shoulder_half_width, head.z()}, eye_x).s;
  const double right =
      solve_reflection_1d({head.x() + body.shoulder_half_width, head.z()}, eye_x).s;
  const double bottom = solve_reflection_1d({feet.y(), feet.z()}, eye_y, ReductionPlane::yz).s;
  // Zero body height stays a zero-height box; otherwise cover the skull.
  const double head_top = head.y() > feet.y() ? head.y() + body.head_radius : head.y();
  const double top = solve_reflection_1d({head_top, head.z()}, eye_y, ReductionPlane::yz).s;

  return GlassBox{std::min(left, right), std::max(left, right), std::min(bottom, top),
                  std::max(bottom, top)};
}

namespace detail {

inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Sutherland-Hodgman against one half-plane: keep points with
/// sign * (p[axis] - bound) >= 0.
inline std::vector<Vec2> clip_half_plane(const std::vector<Vec2>& poly, int axis, double bound,
                                         double sign) {
  std::vector<Vec2> out;
  if (poly.empty()) return out;
  out.reserve(poly.size() + 2);
  auto inside = [&](const Vec2& p) { return sign * (p[axis] - bound) >= 0.0; };
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& cur = poly[i];
    const Vec2& nxt = poly[(i + 1) % poly.size()];
    const bool cin = inside(cur), nin = inside(nxt);
    if (cin) out.push_back(cur);
    if (cin != nin) {
      const double t = (bound - cur[axis]) / (nxt[axis] - cur[axis]);
      Vec2 hit = cur + t * (nxt - cur);
      hit[axis] = bound;
      out.push_back(hit);
    }
  }
  return out;
}

}  // namespace detail

/// Intersection of a polygon with the axis-aligned rectangle [lo, hi]^2.
inline std::vector<Vec2> clip_to_square(const std::vector<Vec2>& poly, double lo, double hi) {
  auto out = detail::clip_half_plane(poly, 0, lo, 1.0);
  out = detail::clip_half_plane(out, 0, hi, -1.0);
  out = detail::clip_half_plane(out, 1, lo, 1.0);
  out = detail::clip_half_plane(out, 1, hi, -1.0);
  return out;
}

/// Signed shoelace area; positive for counter-clockwise outlines.
inline double signed_area(const std::vector<Vec2>& poly) {
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    twice += detail::cross(poly[i], poly[(i + 1) % poly.size()]);
  }
  return 0.5 * twice;
}

/// True when no two non-adjacent edges intersect.
inline bool is_simple(const std::vector<Vec2>& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  auto orient = [](const Vec2& a, const Vec2& b, const Vec2& c) {
    const double v = detail::cross(b - a, c - a);
    return (v > 0.0) - (v < 0.0);
  };
  auto on_segment = [](const Vec2& a, const Vec2& b, const Vec2& p) {
    return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) &&
           std::min(a.y(), b.y()) <= p.y() && p.y() <= std::max(a.y(), b.y());
  };
  auto intersects = [&](const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
    const int o1 = orient(p1, p2, q1), o2 = orient(p1, p2, q2);
    const int o3 = orient(q1, q2, p1), o4 = orient(q1, q2, p2);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(p1, p2, q1)) return true;
    if (o2 == 0 && on_segment(p1, p2, q2)) return true;
    if (o3 == 0 && on_segment(q1, q2, p1)) return true;
    if (o4 == 0 && on_segment(q1, q2, p2)) return true;
    return false;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (intersects(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) return false;
    }
  }
  return true;
}

/// Ellipse inscribed in the anchor box, normalized by the mirror size and
/// clipped to the extended screen square. An ellipse entirely outside the
/// extended square yields an empty outline.
inline SilhouettePolygon build_polygon(const GlassBox& box, const SilhouetteShape& shape,
                                       const MirrorFrame& frame,
                                       int vertices = kDefaultOvalVertices) {
  shape.validate();
  const int n = std::max(vertices, 8);
  const Vec2 center(0.5 * (box.x_min + box.x_max) / frame.width,
                    0.5 * (box.y_min + box.y_max) / frame.height);
  const double semi_x = 0.5 * box.width() / frame.width * shape.width_scale;
  const double semi_y = 0.5 * box.height() / frame.height;

  std::vector<Vec2> ring;
  ring.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / n;
    ring.emplace_back(center.x() + semi_x * std::cos(theta), center.y() + semi_y * std::sin(theta));
  }

  const bool inside_bounds = std::all_of(ring.begin(), ring.end(), [](const Vec2& p) {
    return p.x() >= kScreenOverhangMin && p.x() <= kScreenOverhangMax &&
           p.y() >= kScreenOverhangMin && p.y() <= kScreenOverhangMax;
  });

  SilhouettePolygon poly;
  poly.outline = inside_bounds ? std::move(ring)
                               : clip_to_square(ring, kScreenOverhangMin, kScreenOverhangMax);
  poly.opacity = shape.opacity;
  return poly;
}

/// Reflected arm segments from each shoulder to the matching controller, meters on the glass.
inline std::vector<Capsule> arm_capsules(const Pose& controller_left, const Pose& controller_right,
                                         const Pose& player_head, const Pose& viewer,
                                         const MirrorFrame& frame, const BodyModel& body) {
  const Vec3 head = to_mirror_frame(player_head.position, frame);
  const Vec3 eye = to_mirror_frame(viewer.position, frame);

  auto arm = [&](const Pose& controller, double side) {
    const Vec3 shoulder(head.x() + side * body.shoulder_half_width, head.y() - kShoulderDrop,
                        head.z());
    const Vec3 hand = to_mirror_frame(controller.position, frame);
    Capsule cap;
    cap.a = reflect_point_on_mirror(shoulder, eye);
    cap.b = reflect_point_on_mirror(hand, eye);
    // Reflect the radius extremes at the hand and take half their spread.
    const PlanarPoint eye_x{eye.x(), eye.z()};
    const double lo = solve_reflection_1d({hand.x() - body.arm_radius, hand.z()}, eye_x).s;
    const double hi = solve_reflection_1d({hand.x() + body.arm_radius, hand.z()}, eye_x).s;
    cap.radius = 0.5 * std::abs(hi - lo);
    return cap;
  };
  return {arm(controller_left, -1.0), arm(controller_right, +1.0)};
}

/// Glass-meter capsule to normalized screen units.
inline Capsule normalize_capsule(const Capsule& c, const MirrorFrame& frame) {
  const Vec2 scale(1.0 / frame.width, 1.0 / frame.height);
  return Capsule{c.a.cwiseProduct(scale), c.b.cwiseProduct(scale), c.radius / frame.width};
}

/// Luminance ramp for adaptive darkening.
struct OpacityRamp {
  double slope = 0.8;
  double min_opacity = 0.2;
  double max_opacity = 1.0;
};

/// Darker overlay on bright backgrounds: linear in luminance around 0.5, clamped.
inline double adaptive_opacity(const SilhouetteShape& base, double background_luminance,
                               const OpacityRamp& ramp = {}) {
  const double lum = std::clamp(background_luminance, 0.0, 1.0);
  const double raw = base.opacity + ramp.slope * (lum - 0.5);
  return std::clamp(raw, ramp.min_opacity, ramp.max_opacity);
}

}  // namespace mirrorcast
