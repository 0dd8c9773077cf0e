#pragma once

// Per-tick state streamed to renderer clients.
//
// JSON text frame:
//   {"type":"frame", "tick":N, "timestamp_us":T, "status":"ok"|"stale"|"invalid",
//    "message":"...", "has_geometry":true,
//    "view":[16], "projection":[16], "texture_projection":[16]   (column-major),
//    "clip_plane":[a,b,c,d], "blit":[u0,v0,u1,v1], "overscan":o, "near":n, "far":f,
//    "silhouette":{"outline":[[x,y],...], "opacity":o,
//                  "arm_capsules":[{"a":[x,y],"b":[x,y],"radius":r}]},
//    "anchor":[x_min,y_min,x_max,y_max], "fov":{"h":deg,"v":deg},
//    "stale":{"viewer":false,...}, "pose_timestamps":{"viewer":T,...},
//    "events":[{"kind":"teleport","tick":N,"magnitude":m}]}
//
// Doubles are printed with round-trip precision, so equal JSON text means
// bit-identical values; digests hash that text.

#include "mirrorcast/analysis.hpp"
#include "mirrorcast/frustum.hpp"
#include "mirrorcast/silhouette.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <iomanip>
#include <sstream>
#include <string>

namespace mirrorcast {

enum class FrameStatus { ok, stale, invalid };

constexpr std::string_view to_string(FrameStatus s) {
  switch (s) {
    case FrameStatus::ok: return "ok";
    case FrameStatus::stale: return "stale";
    case FrameStatus::invalid: return "invalid";
  }
  return "unknown";
}

/// Everything derived from one pose snapshot.
struct FrameGeometry {
  RenderParams render;
  SilhouettePolygon silhouette;
  GlassBox anchor;  // normalized screen units
  FovReport fov;
  Coverage coverage;
};

struct FrameUpdate {
  std::uint64_t tick = 0;
  Timestamp timestamp_us = 0;
  FrameStatus status = FrameStatus::ok;
  std::string message;
  std::optional<FrameGeometry> geometry;
  std::array<bool, kEntityCount> stale{};
  std::array<std::optional<Timestamp>, kEntityCount> pose_timestamps{};
  std::vector<EventFlag> events;
};

namespace frame_detail {

inline nlohmann::json column_major(const Mat4& m) {
  nlohmann::json a = nlohmann::json::array();
  for (int c = 0; c < 4; ++c)
    for (int r = 0; r < 4; ++r) a.push_back(m(r, c));
  return a;
}

inline nlohmann::json point(const Vec2& p) { return {p.x(), p.y()}; }

}  // namespace frame_detail

/// Geometry-only part of the frame; equal across ticks for static poses.
inline nlohmann::json geometry_json(const FrameUpdate& f) {
  using namespace frame_detail;
  nlohmann::json j;
  j["status"] = std::string(to_string(f.status));
  j["has_geometry"] = f.geometry.has_value();
  if (f.geometry) {
    const FrameGeometry& g = *f.geometry;
    j["view"] = column_major(g.render.view_matrix);
    j["projection"] = column_major(g.render.projection_matrix);
    j["texture_projection"] = column_major(g.render.texture_projection_matrix);
    const Vec4& cp = g.render.oblique_clip_plane;
    j["clip_plane"] = {cp.x(), cp.y(), cp.z(), cp.w()};
    const TextureRect& b = g.render.texture_blit;
    j["blit"] = {b.u0, b.v0, b.u1, b.v1};
    j["overscan"] = g.render.overscan;
    j["near"] = g.render.near;
    j["far"] = g.render.far;
    nlohmann::json outline = nlohmann::json::array();
    for (const auto& p : g.silhouette.outline) outline.push_back(point(p));
    nlohmann::json capsules = nlohmann::json::array();
    for (const auto& c : g.silhouette.arm_capsules) {
      capsules.push_back({{"a", point(c.a)}, {"b", point(c.b)}, {"radius", c.radius}});
    }
    j["silhouette"] = {
        {"outline", outline}, {"opacity", g.silhouette.opacity}, {"arm_capsules", capsules}};
    j["anchor"] = {g.anchor.x_min, g.anchor.y_min, g.anchor.x_max, g.anchor.y_max};
    j["fov"] = {{"h", g.fov.horizontal_deg}, {"v", g.fov.vertical_deg}};
    j["coverage"] = {{"on_screen", g.coverage.coverage}, {"overflow", g.coverage.overflow}};
  }
  nlohmann::json stale = nlohmann::json::object();
  for (EntityId id : kAllEntities) stale[std::string(to_string(id))] = f.stale[index_of(id)];
  j["stale"] = stale;
  return j;
}

inline nlohmann::json to_json(const FrameUpdate& f) {
  nlohmann::json j = geometry_json(f);
  j["type"] = "frame";
  j["tick"] = f.tick;
  j["timestamp_us"] = f.timestamp_us;
  j["message"] = f.message;
  nlohmann::json ts = nlohmann::json::object();
  for (EntityId id : kAllEntities) {
    if (f.pose_timestamps[index_of(id)]) ts[std::string(to_string(id))] = *f.pose_timestamps[index_of(id)];
  }
  j["pose_timestamps"] = ts;
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : f.events) {
    events.push_back({{"kind", std::string(to_string(e.kind))}, {"tick", e.tick}, {"magnitude", e.magnitude}});
  }
  j["events"] = events;
  return j;
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::ostringstream out;
  out << std::hex << std::setfill('0');
  for (unsigned i = 0; i < len; ++i) out << std::setw(2) << static_cast<int>(md[i]);
  return out.str();
}

inline std::string digest(const FrameUpdate& f) { return sha256_hex(to_json(f).dump()); }

inline std::string geometry_digest(const FrameUpdate& f) {
  return sha256_hex(geometry_json(f).dump());
}

/// Chained digest of a frame sequence.
inline std::string sequence_digest(const std::vector<FrameUpdate>& frames) {
  std::string chain;
  chain.reserve(frames.size() * 64);
  for (const auto& f : frames) chain += digest(f);
  return sha256_hex(chain);
}

}  // namespace mirrorcast
