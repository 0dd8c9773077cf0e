#pragma once

// Synthetic tracker sessions: a spectator swaying in front of the mirror and
// a player walking the room, with optional teleport jumps. Output is fully
// determined by the parameters.

#include "mirrorcast/config.hpp"
#include "mirrorcast/trace.hpp"

#include <numbers>
#include <random>

namespace mirrorcast {

struct SyntheticSpec {
  double duration_s = 10.0;
  double rate_hz = 90.0;
  std::uint64_t seed = 1;
  int teleports = 0;
  double teleport_min_distance = 3.0;
  double walk_speed = 1.4;  // m/s
  Timestamp start_us = 1'000'000;
  std::uint32_t sender = 1;
};

namespace synthetic_detail {

struct Room {
  double x_min = -3.0, x_max = 3.0;
  double z_min = 0.8, z_max = 6.0;
};

inline Quat yaw(double angle) { return Quat(Eigen::AngleAxisd(angle, Vec3::UnitY())); }

}  // namespace synthetic_detail

/// Every entity except the mirror tracker is emitted once per sample, in
/// entity order, all sharing the sample timestamp.
inline PoseTrace make_synthetic_trace(const SessionConfig& config, const SyntheticSpec& spec) {
  using namespace synthetic_detail;
  const Room room;
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  PoseTrace trace;
  trace.header = TraceHeader::from_config(config, 0);
  const auto samples = static_cast<int>(spec.duration_s * spec.rate_hz);
  const double dt = 1.0 / spec.rate_hz;
  const double eye_height = 1.7;

  // Jump samples, spread evenly with at least one second between them.
  std::vector<int> jump_at;
  for (int k = 1; k <= spec.teleports; ++k) jump_at.push_back(k * samples / (spec.teleports + 1));

  Vec3 head(0.0, eye_height, 2.0);
  Vec3 target(uniform(room.x_min, room.x_max), eye_height, uniform(room.z_min, room.z_max));
  std::uint64_t seq = 0;
  std::size_t next_jump = 0;

  for (int i = 0; i < samples; ++i) {
    const double t = i * dt;
    const auto stamp = spec.start_us + static_cast<Timestamp>(std::llround(t * 1e6));

    if (next_jump < jump_at.size() && i == jump_at[next_jump]) {
      Vec3 dest;
      do {
        dest = Vec3(uniform(room.x_min, room.x_max), eye_height, uniform(room.z_min, room.z_max));
      } while ((dest - head).norm() < spec.teleport_min_distance + 0.2);
      head = dest;
      ++next_jump;
    } else {
      const Vec3 to = target - head;
      const double step = spec.walk_speed * dt;
      if (to.norm() <= step) {
        head = target;
        target = Vec3(uniform(room.x_min, room.x_max), eye_height, uniform(room.z_min, room.z_max));
      } else {
        head += to.normalized() * step;
      }
    }
    // Gait bob; its vertical speed stays well under walking speed.
    const Vec3 head_now = head + Vec3(0, 0.02 * std::sin(2 * std::numbers::pi * 1.8 * t), 0);
    const double facing = 0.3 * std::sin(0.4 * t);

    const Vec3 viewer(0.25 * std::sin(0.5 * t), 1.6 + 0.02 * std::sin(0.9 * t), 0.65 + 0.1 * std::sin(0.3 * t));
    const Quat viewer_q = yaw(0.15 * std::sin(0.5 * t + 1.0));
    const Vec3 swing(0, 0, 0.15 * std::sin(2 * std::numbers::pi * 0.9 * t));
    const Quat head_q = yaw(facing);
    const Vec3 left = head_now + head_q * Vec3(-0.3, -0.45, -0.2) + swing;
    const Vec3 right = head_now + head_q * Vec3(0.3, -0.45, -0.2) - swing;
    const Vec3 feet(head_now.x(), config.floor_y, head_now.z());

    const std::array<Pose, 5> poses = {
        make_pose(EntityId::viewer, viewer, stamp, viewer_q),
        make_pose(EntityId::player_head, head_now, stamp, head_q),
        make_pose(EntityId::player_feet, feet, stamp, head_q),
        make_pose(EntityId::controller_left, left, stamp, head_q),
        make_pose(EntityId::controller_right, right, stamp, head_q),
    };
    for (const Pose& p : poses) trace.messages.push_back(to_message(p, spec.sender, ++seq));
  }
  return trace;
}

}  // namespace mirrorcast
