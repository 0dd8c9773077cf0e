#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mirrorcast {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;

/// Microseconds on a monotonic clock shared by all senders after offset correction.
using Timestamp = std::int64_t;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Mirror tracker or mount offset cannot define a valid frame.
class CalibrationError : public Error {
public:
  using Error::Error;
};

/// A point that must be in front of the glass is on it or behind it.
class BehindMirrorError : public Error {
public:
  using Error::Error;
};

class DegenerateGeometryError : public Error {
public:
  using Error::Error;
};

class PoseValidityError : public Error {
public:
  using Error::Error;
};

class InsufficientOverscanError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Tracked entities
// ---------------------------------------------------------------------------

enum class EntityId : std::uint8_t {
  viewer = 0,
  player_head = 1,
  player_feet = 2,
  controller_left = 3,
  controller_right = 4,
  mirror = 5,
};

inline constexpr std::size_t kEntityCount = 6;

inline constexpr std::array<EntityId, kEntityCount> kAllEntities = {
    EntityId::viewer,          EntityId::player_head,      EntityId::player_feet,
    EntityId::controller_left, EntityId::controller_right, EntityId::mirror,
};

constexpr std::size_t index_of(EntityId id) { return static_cast<std::size_t>(id); }

constexpr std::string_view to_string(EntityId id) {
  switch (id) {
    case EntityId::viewer: return "viewer";
    case EntityId::player_head: return "player_head";
    case EntityId::player_feet: return "player_feet";
    case EntityId::controller_left: return "controller_left";
    case EntityId::controller_right: return "controller_right";
    case EntityId::mirror: return "mirror";
  }
  return "unknown";
}

inline std::optional<EntityId> entity_from_string(std::string_view name) {
  for (EntityId id : kAllEntities) {
    if (to_string(id) == name) return id;
  }
  return std::nullopt;
}

inline std::optional<EntityId> entity_from_code(unsigned code) {
  if (code >= kEntityCount) return std::nullopt;
  return static_cast<EntityId>(code);
}

class StaleEntityError : public Error {
public:
  explicit StaleEntityError(std::vector<EntityId> entities)
      : Error(describe(entities)), entities_(std::move(entities)) {}

  const std::vector<EntityId>& entities() const noexcept { return entities_; }

private:
  static std::string describe(const std::vector<EntityId>& entities) {
    std::string msg = "stale entities:";
    for (EntityId e : entities) {
      msg += ' ';
      msg += to_string(e);
    }
    return msg;
  }

  std::vector<EntityId> entities_;
};

inline constexpr double kUnitQuaternionTolerance = 1e-6;

/// Timestamped rigid transform of one tracked entity, world frame, meters.
struct Pose {
  EntityId entity = EntityId::viewer;
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();
  Timestamp timestamp_us = 0;
};

inline bool is_unit(const Quat& q, double tol = kUnitQuaternionTolerance) {
  return std::abs(q.norm() - 1.0) <= tol;
}

inline bool is_finite(const Vec3& v) { return v.allFinite(); }

inline Pose make_pose(EntityId id, const Vec3& position, Timestamp t = 0,
                      const Quat& orientation = Quat::Identity()) {
  return Pose{id, position, orientation, t};
}

/// One optional latest pose per entity; indexed by EntityId.
struct PoseSet {
  std::array<std::optional<Pose>, kEntityCount> poses{};

  const std::optional<Pose>& operator[](EntityId id) const { return poses[index_of(id)]; }
  std::optional<Pose>& operator[](EntityId id) { return poses[index_of(id)]; }

  void set(const Pose& p) { poses[index_of(p.entity)] = p; }
  bool has(EntityId id) const { return poses[index_of(id)].has_value(); }
};

}  // namespace mirrorcast
