#pragma once

// Session configuration and its JSON form.
//
// {
//   "mirror": {"width": 0.531, "height": 0.299,
//              "mount_offset": {"translation": [x,y,z], "rotation": [w,x,y,z]},
//              "static_pose": {"position": [x,y,z], "orientation": [w,x,y,z]}},
//   "body": {"shoulder_half_width": 0.25, "head_radius": 0.12, "arm_radius": 0.06},
//   "silhouette": {"shape": "default_oval", "opacity": 1.0, "width_scale": 1.0,
//                  "vertices": 64, "luminance_slope": 0.8},
//   "smoothing_tau_s": 0.03,
//   "tick_rate_hz": 90,
//   "near": 0.05, "far": 100.0, "overscan": 1.3,
//   "eye_offset": [0, -0.05, -0.10],
//   "floor_y": 0.0,
//   "staleness_ms": 200,
//   "teleport_threshold_mps": 10.0,
//   "deterministic": false,
//   "ports": {"ingest": 47800, "serve": 47801}
// }
//
// Every key is optional; missing keys keep their defaults. Unknown keys are
// rejected so that typos do not pass silently.

#include "mirrorcast/core.hpp"
#include "mirrorcast/frustum.hpp"
#include "mirrorcast/mirror_geometry.hpp"
#include "mirrorcast/pose_store.hpp"
#include "mirrorcast/silhouette.hpp"
#include "mirrorcast/smoothing.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <string>

namespace mirrorcast {

inline constexpr int kDefaultIngestPort = 47800;
inline constexpr int kDefaultServePort = 47801;

struct SessionConfig {
  double mirror_width = 0.531;
  double mirror_height = 0.299;
  std::optional<MountOffset> mount_offset;  // default: default_mount_offset(width, height)
  /// Mirror tracker pose used while no live mirror pose is fresh.
  Vec3 static_mirror_position = Vec3(0.0, 1.6, 0.0);
  Quat static_mirror_orientation = Quat::Identity();

  BodyModel body;
  SilhouetteShape shape;
  int oval_vertices = kDefaultOvalVertices;
  OpacityRamp opacity_ramp;

  double smoothing_tau_s = kDefaultSmoothingTau;
  double tick_rate_hz = 90.0;
  double near = 0.05;
  double far = 100.0;
  double overscan = 1.3;
  Vec3 eye_offset = kDefaultEyeOffset;
  double floor_y = 0.0;
  double staleness_ms = 200.0;
  double teleport_threshold_mps = 10.0;
  bool deterministic = false;
  int ingest_port = kDefaultIngestPort;
  int serve_port = kDefaultServePort;

  MountOffset effective_mount_offset() const {
    return mount_offset ? *mount_offset : default_mount_offset(mirror_width, mirror_height);
  }

  Timestamp staleness_us() const { return static_cast<Timestamp>(staleness_ms * 1000.0); }
  Timestamp tick_period_us() const { return static_cast<Timestamp>(1e6 / tick_rate_hz); }

  Pose static_mirror_pose() const {
    return Pose{EntityId::mirror, static_mirror_position, static_mirror_orientation, 0};
  }

  void validate() const {
    if (!(mirror_width > 0.0) || !(mirror_height > 0.0)) {
      throw ConfigError("mirror.width and mirror.height must be positive");
    }
    if (mount_offset && !is_unit(mount_offset->rotation)) {
      throw ConfigError("mirror.mount_offset.rotation must be a unit quaternion");
    }
    if (!is_unit(static_mirror_orientation)) {
      throw ConfigError("mirror.static_pose.orientation must be a unit quaternion");
    }
    body.validate();
    shape.validate();
    if (oval_vertices < 8) throw ConfigError("silhouette.vertices must be >= 8");
    if (!(smoothing_tau_s >= 0.0 && smoothing_tau_s <= kMaxSmoothingTau)) {
      throw ConfigError("smoothing_tau_s must be within [0, 0.5]");
    }
    if (!(tick_rate_hz >= 10.0 && tick_rate_hz <= 240.0)) {
      throw ConfigError("tick_rate_hz must be within [10, 240]");
    }
    if (!(near > 0.0) || !(far > near)) throw ConfigError("near/far must satisfy 0 < near < far");
    if (!(overscan >= 1.0)) throw ConfigError("overscan must be >= 1");
    if (!(staleness_ms > 0.0)) throw ConfigError("staleness_ms must be positive");
    if (!(teleport_threshold_mps > 0.0)) {
      throw ConfigError("teleport_threshold_mps must be positive");
    }
    auto port_ok = [](int p) { return p >= 0 && p <= 65535; };
    if (!port_ok(ingest_port) || !port_ok(serve_port)) {
      throw ConfigError("ports must be within [0, 65535]");
    }
  }
};

namespace config_detail {

using nlohmann::json;

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw ConfigError("unknown key '" + where + it.key() + "'");
    }
  }
}

inline double number(const json& j, const char* key, double fallback, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number()) throw ConfigError("'" + where + key + "' must be a number");
  return it->get<double>();
}

inline Vec3 vec3(const json& j, const char* key, const Vec3& fallback, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_array() || it->size() != 3 ||
      !std::all_of(it->begin(), it->end(), [](const json& v) { return v.is_number(); })) {
    throw ConfigError("'" + where + key + "' must be an array of 3 numbers");
  }
  return Vec3((*it)[0].get<double>(), (*it)[1].get<double>(), (*it)[2].get<double>());
}

inline Quat quat(const json& j, const char* key, const Quat& fallback, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_array() || it->size() != 4 ||
      !std::all_of(it->begin(), it->end(), [](const json& v) { return v.is_number(); })) {
    throw ConfigError("'" + where + key + "' must be an array of 4 numbers [w, x, y, z]");
  }
  return Quat((*it)[0].get<double>(), (*it)[1].get<double>(), (*it)[2].get<double>(),
              (*it)[3].get<double>());
}

inline const json& object(const json& j, const char* key, const std::string& where) {
  static const json empty = json::object();
  auto it = j.find(key);
  if (it == j.end()) return empty;
  if (!it->is_object()) throw ConfigError("'" + where + key + "' must be an object");
  return *it;
}

inline json arr(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
inline json arr(const Quat& q) { return {q.w(), q.x(), q.y(), q.z()}; }

}  // namespace config_detail

inline SessionConfig config_from_json(const nlohmann::json& j) {
  using namespace config_detail;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j,
                 {"mirror", "body", "silhouette", "smoothing_tau_s", "tick_rate_hz", "near", "far",
                  "overscan", "eye_offset", "floor_y", "staleness_ms", "teleport_threshold_mps",
                  "deterministic", "ports"},
                 "");
  SessionConfig c;

  const json& mirror = object(j, "mirror", "");
  reject_unknown(mirror, {"width", "height", "mount_offset", "static_pose"}, "mirror.");
  c.mirror_width = number(mirror, "width", c.mirror_width, "mirror.");
  c.mirror_height = number(mirror, "height", c.mirror_height, "mirror.");
  if (mirror.contains("mount_offset")) {
    const json& mo = object(mirror, "mount_offset", "mirror.");
    reject_unknown(mo, {"translation", "rotation"}, "mirror.mount_offset.");
    MountOffset off;
    off.translation = vec3(mo, "translation", Vec3::Zero(), "mirror.mount_offset.");
    off.rotation = quat(mo, "rotation", Quat::Identity(), "mirror.mount_offset.");
    c.mount_offset = off;
  }
  const json& sp = object(mirror, "static_pose", "mirror.");
  reject_unknown(sp, {"position", "orientation"}, "mirror.static_pose.");
  c.static_mirror_position = vec3(sp, "position", c.static_mirror_position, "mirror.static_pose.");
  c.static_mirror_orientation =
      quat(sp, "orientation", c.static_mirror_orientation, "mirror.static_pose.");

  const json& body = object(j, "body", "");
  reject_unknown(body, {"shoulder_half_width", "head_radius", "arm_radius"}, "body.");
  c.body.shoulder_half_width =
      number(body, "shoulder_half_width", c.body.shoulder_half_width, "body.");
  c.body.head_radius = number(body, "head_radius", c.body.head_radius, "body.");
  c.body.arm_radius = number(body, "arm_radius", c.body.arm_radius, "body.");

  const json& sil = object(j, "silhouette", "");
  reject_unknown(sil, {"shape", "opacity", "width_scale", "vertices", "luminance_slope"},
                 "silhouette.");
  if (sil.contains("shape")) {
    if (!sil["shape"].is_string()) throw ConfigError("'silhouette.shape' must be a string");
    auto v = variant_from_string(sil["shape"].get<std::string>());
    if (!v) throw ConfigError("unknown silhouette.shape '" + sil["shape"].get<std::string>() + "'");
    c.shape = SilhouetteShape::preset(*v);
  }
  c.shape.opacity = number(sil, "opacity", c.shape.opacity, "silhouette.");
  c.shape.width_scale = number(sil, "width_scale", c.shape.width_scale, "silhouette.");
  c.oval_vertices = static_cast<int>(number(sil, "vertices", c.oval_vertices, "silhouette."));
  c.opacity_ramp.slope = number(sil, "luminance_slope", c.opacity_ramp.slope, "silhouette.");

  c.smoothing_tau_s = number(j, "smoothing_tau_s", c.smoothing_tau_s, "");
  c.tick_rate_hz = number(j, "tick_rate_hz", c.tick_rate_hz, "");
  c.near = number(j, "near", c.near, "");
  c.far = number(j, "far", c.far, "");
  c.overscan = number(j, "overscan", c.overscan, "");
  c.eye_offset = vec3(j, "eye_offset", c.eye_offset, "");
  c.floor_y = number(j, "floor_y", c.floor_y, "");
  c.staleness_ms = number(j, "staleness_ms", c.staleness_ms, "");
  c.teleport_threshold_mps = number(j, "teleport_threshold_mps", c.teleport_threshold_mps, "");
  if (j.contains("deterministic")) {
    if (!j["deterministic"].is_boolean()) throw ConfigError("'deterministic' must be a boolean");
    c.deterministic = j["deterministic"].get<bool>();
  }
  const json& ports = object(j, "ports", "");
  reject_unknown(ports, {"ingest", "serve"}, "ports.");
  c.ingest_port = static_cast<int>(number(ports, "ingest", c.ingest_port, "ports."));
  c.serve_port = static_cast<int>(number(ports, "serve", c.serve_port, "ports."));

  c.validate();
  return c;
}

inline nlohmann::json to_json(const SessionConfig& c) {
  using config_detail::arr;
  const MountOffset mo = c.effective_mount_offset();
  return {
      {"mirror",
       {{"width", c.mirror_width},
        {"height", c.mirror_height},
        {"mount_offset", {{"translation", arr(mo.translation)}, {"rotation", arr(mo.rotation)}}},
        {"static_pose",
         {{"position", arr(c.static_mirror_position)},
          {"orientation", arr(c.static_mirror_orientation)}}}}},
      {"body",
       {{"shoulder_half_width", c.body.shoulder_half_width},
        {"head_radius", c.body.head_radius},
        {"arm_radius", c.body.arm_radius}}},
      {"silhouette",
       {{"shape", std::string(to_string(c.shape.variant))},
        {"opacity", c.shape.opacity},
        {"width_scale", c.shape.width_scale},
        {"vertices", c.oval_vertices},
        {"luminance_slope", c.opacity_ramp.slope}}},
      {"smoothing_tau_s", c.smoothing_tau_s},
      {"tick_rate_hz", c.tick_rate_hz},
      {"near", c.near},
      {"far", c.far},
      {"overscan", c.overscan},
      {"eye_offset", arr(c.eye_offset)},
      {"floor_y", c.floor_y},
      {"staleness_ms", c.staleness_ms},
      {"teleport_threshold_mps", c.teleport_threshold_mps},
      {"deterministic", c.deterministic},
      {"ports", {{"ingest", c.ingest_port}, {"serve", c.serve_port}}},
  };
}

inline SessionConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file '" + path + "' is not valid JSON");
  return config_from_json(j);
}

}  // namespace mirrorcast
