#pragma once

#include "mirrorcast/core.hpp"
#include "mirrorcast/silhouette.hpp"

#include <cmath>
#include <numbers>
#include <optional>

namespace mirrorcast {

inline constexpr double kMetersPerInch = 0.0254;

struct PanelDims {
  double width = 0.0;   // meters
  double height = 0.0;  // meters
};

/// Panel size from its diagonal and aspect ratio (16:9 unless given).
inline PanelDims panel_from_diagonal(double diagonal_inches, double aspect_w = 16.0,
                                     double aspect_h = 9.0) {
  const double diag_m = diagonal_inches * kMetersPerInch;
  const double unit = diag_m / std::hypot(aspect_w, aspect_h);
  return PanelDims{aspect_w * unit, aspect_h * unit};
}

struct FovReport {
  double horizontal_deg = 0.0;
  double vertical_deg = 0.0;
  double solid_angle_sr = 0.0;
  double diagonal_inches = 0.0;
  PanelDims dims;
  double viewer_depth = 0.0;
};

namespace detail {

// Solid angle of the rectangle [0,x] x [0,y] at distance d seen from the
// point above its origin corner; signed in x and y.
inline double corner_solid_angle(double x, double y, double d) {
  return std::atan(x * y / (d * std::sqrt(x * x + y * y + d * d)));
}

}  // namespace detail

/// Angles subtended by the glass from a mirror-local viewer position. The
/// horizontal angle is measured between the rays to the left and right
/// edges in the viewer's horizontal plane, likewise vertically.
inline FovReport fov_report(const Vec3& viewer_local, const PanelDims& dims) {
  if (!viewer_local.allFinite()) throw PoseValidityError("viewer position is not finite");
  if (viewer_local.z() <= 0.0) throw BehindMirrorError("viewer is on or behind the glass");
  if (!(dims.width > 0.0) || !(dims.height > 0.0)) {
    throw ConfigError("screen dimensions must be positive");
  }
  const double ex = viewer_local.x(), ey = viewer_local.y(), d = viewer_local.z();
  constexpr double to_deg = 180.0 / std::numbers::pi;

  FovReport r;
  r.horizontal_deg = (std::atan((dims.width - ex) / d) + std::atan(ex / d)) * to_deg;
  r.vertical_deg = (std::atan((dims.height - ey) / d) + std::atan(ey / d)) * to_deg;

  const double x0 = -ex, x1 = dims.width - ex, y0 = -ey, y1 = dims.height - ey;
  using detail::corner_solid_angle;
  r.solid_angle_sr = corner_solid_angle(x1, y1, d) - corner_solid_angle(x0, y1, d) -
                     corner_solid_angle(x1, y0, d) + corner_solid_angle(x0, y0, d);
  r.dims = dims;
  r.diagonal_inches = std::hypot(dims.width, dims.height) / kMetersPerInch;
  r.viewer_depth = d;
  return r;
}

struct Coverage {
  double coverage = 0.0;    // area of polygon within [0,1]^2
  double overflow = 0.0;    // area of polygon outside [0,1]^2
  double total_area = 0.0;  // coverage + overflow
};

/// Screen fraction darkened by the outline and the part that falls off the glass.
inline Coverage silhouette_coverage(const SilhouettePolygon& poly) {
  Coverage c;
  if (poly.outline.size() < 3) return c;
  c.total_area = std::abs(signed_area(poly.outline));
  c.coverage = std::abs(signed_area(clip_to_square(poly.outline, 0.0, 1.0)));
  c.coverage = std::min(c.coverage, c.total_area);
  c.overflow = c.total_area - c.coverage;
  return c;
}

enum class EventKind { teleport, stale, silhouette_offscreen };

constexpr std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::teleport: return "teleport";
    case EventKind::stale: return "stale";
    case EventKind::silhouette_offscreen: return "silhouette_offscreen";
  }
  return "unknown";
}

struct EventFlag {
  EventKind kind = EventKind::teleport;
  std::uint64_t tick = 0;
  double magnitude = 0.0;  // meters for teleports
};

inline constexpr double kDefaultTeleportThreshold = 10.0;  // m/s

/// Flags a jump whose implied speed exceeds `threshold_mps`.
inline std::optional<EventFlag> detect_teleport(const Pose& prev, const Pose& next, double dt_s,
                                                double threshold_mps = kDefaultTeleportThreshold,
                                                std::uint64_t tick = 0) {
  if (!(dt_s > 0.0)) return std::nullopt;
  const double displacement = (next.position - prev.position).norm();
  if (displacement / dt_s <= threshold_mps) return std::nullopt;
  return EventFlag{EventKind::teleport, tick, displacement};
}

}  // namespace mirrorcast
