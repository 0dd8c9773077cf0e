#pragma once

// Per-tick orchestration: pose ingestion (validation, teleport detection,
// smoothing, snapshot publication) and FrameUpdate composition.

#include "mirrorcast/analysis.hpp"
#include "mirrorcast/config.hpp"
#include "mirrorcast/frame_update.hpp"
#include "mirrorcast/frustum.hpp"
#include "mirrorcast/mirror_geometry.hpp"
#include "mirrorcast/pose_store.hpp"
#include "mirrorcast/pose_wire.hpp"
#include "mirrorcast/silhouette.hpp"
#include "mirrorcast/smoothing.hpp"
#include "mirrorcast/trace.hpp"

#include <map>
#include <mutex>

namespace mirrorcast {

inline constexpr std::array<EntityId, 2> kMandatoryEntities = {EntityId::viewer,
                                                               EntityId::player_head};

/// Mirror frame for a pose set: the tracked mirror when present, else the
/// configured static pose.
inline MirrorFrame session_mirror_frame(const SessionConfig& config, const PoseSet& poses) {
  Pose tracker = poses.has(EntityId::mirror) ? *poses[EntityId::mirror] : config.static_mirror_pose();
  return mirror_frame_from_pose(tracker, config.effective_mount_offset(), config.mirror_width,
                                config.mirror_height);
}

/// Pure composition of all geometry for one snapshot. Throws
/// StaleEntityError when a mandatory entity is missing and propagates
/// geometry errors.
inline FrameGeometry compute_geometry(const SessionConfig& config, const PoseSet& poses) {
  std::vector<EntityId> missing;
  for (EntityId id : kMandatoryEntities) {
    if (!poses.has(id)) missing.push_back(id);
  }
  if (!missing.empty()) throw StaleEntityError(std::move(missing));

  const MirrorFrame frame = session_mirror_frame(config, poses);
  const Pose& viewer = *poses[EntityId::viewer];
  const Pose& head = *poses[EntityId::player_head];
  const Pose feet =
      poses.has(EntityId::player_feet) ? *poses[EntityId::player_feet] : feet_from_head(head, config.floor_y);
  const Pose eye = make_pose(EntityId::viewer, eye_position(viewer, config.eye_offset),
                             viewer.timestamp_us, viewer.orientation);

  FrameGeometry g;
  const GlassBox box = silhouette_anchor_box(head, feet, eye, frame, config.body);
  g.silhouette = build_polygon(box, config.shape, frame, config.oval_vertices);
  if (config.shape.variant == SilhouetteVariant::body_with_arms &&
      poses.has(EntityId::controller_left) && poses.has(EntityId::controller_right)) {
    for (const Capsule& c : arm_capsules(*poses[EntityId::controller_left],
                                         *poses[EntityId::controller_right], head, eye, frame,
                                         config.body)) {
      g.silhouette.arm_capsules.push_back(normalize_capsule(c, frame));
    }
  }
  g.anchor = GlassBox{box.x_min / frame.width, box.x_max / frame.width, box.y_min / frame.height,
                      box.y_max / frame.height};
  g.render = render_params(eye.position, frame, config.near, config.far, config.overscan);
  g.fov = fov_report(to_mirror_frame(eye.position, frame), {frame.width, frame.height});
  g.coverage = silhouette_coverage(g.silhouette);
  return g;
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

/// Raw messages in, smoothed poses into the shared store. Safe to call
/// from several ingest threads.
class PosePipeline {
public:
  struct Counters {
    std::uint64_t accepted = 0;
    std::uint64_t dropped_sequence = 0;
    std::uint64_t dropped_out_of_order = 0;
    std::uint64_t dropped_clock = 0;
    std::uint64_t invalid = 0;
  };

  /// Offset-corrected timestamps further than this from the receiver clock are rejected.
  static constexpr Timestamp kClockToleranceUs = 5'000'000;

  PosePipeline(const SessionConfig& config, LatestPoseStore& store)
      : config_(config), store_(store), smoother_(config.smoothing_tau_s) {}

  void set_clock_offset(std::uint32_t sender, Timestamp offset_us) {
    std::lock_guard lock(mutex_);
    clock_offsets_[sender] = offset_us;
  }

  /// `receiver_now` enables the clock sanity check; pass nothing in
  /// deterministic mode. Returns the smoothed pose when accepted.
  std::optional<Pose> ingest(const PoseMessage& raw_msg,
                             std::optional<Timestamp> receiver_now = std::nullopt) {
    std::lock_guard lock(mutex_);
    PoseMessage msg = raw_msg;
    if (auto it = clock_offsets_.find(msg.sender); it != clock_offsets_.end()) {
      msg.timestamp_us += it->second;
    }
    if (receiver_now && std::llabs(msg.timestamp_us - *receiver_now) > kClockToleranceUs) {
      ++counters_.dropped_clock;
      return std::nullopt;
    }
    auto seq = last_sequence_.find(msg.sender);
    if (seq != last_sequence_.end() && msg.sequence <= seq->second) {
      ++counters_.dropped_sequence;
      return std::nullopt;
    }
    last_sequence_[msg.sender] = msg.sequence;

    Pose raw;
    try {
      raw = to_pose(msg);
    } catch (const PoseValidityError&) {
      ++counters_.invalid;
      return std::nullopt;
    }

    if (raw.entity == EntityId::player_head) detect_jump(raw);

    auto smoothed = smoother_.push(raw);
    if (!smoothed) {
      ++counters_.dropped_out_of_order;
      return std::nullopt;
    }
    store_.publish(*smoothed);
    ++counters_.accepted;
    return smoothed;
  }

  /// Teleport events detected since the last call.
  std::vector<EventFlag> drain_events() {
    std::lock_guard lock(mutex_);
    return std::exchange(pending_events_, {});
  }

  Counters counters() const {
    std::lock_guard lock(mutex_);
    return counters_;
  }

private:
  void detect_jump(const Pose& raw) {
    if (last_head_ && raw.timestamp_us > last_head_->timestamp_us) {
      const double dt = 1e-6 * static_cast<double>(raw.timestamp_us - last_head_->timestamp_us);
      if (auto flag = detect_teleport(*last_head_, raw, dt, config_.teleport_threshold_mps)) {
        pending_events_.push_back(*flag);
        // The filter would otherwise glide across the jump.
        smoother_.reset(EntityId::player_head);
        smoother_.reset(EntityId::player_feet);
      }
    }
    last_head_ = raw;
  }

  SessionConfig config_;
  LatestPoseStore& store_;
  mutable std::mutex mutex_;
  PoseSmoother smoother_;
  std::map<std::uint32_t, std::uint64_t> last_sequence_;
  std::map<std::uint32_t, Timestamp> clock_offsets_;
  std::optional<Pose> last_head_;
  std::vector<EventFlag> pending_events_;
  Counters counters_;
};

// ---------------------------------------------------------------------------
// Tick
// ---------------------------------------------------------------------------

/// Owns the tick counter and the last valid geometry. A stale or invalid
/// snapshot repeats the last geometry with flags instead of emitting a
/// partially updated frame.
class SessionEngine {
public:
  explicit SessionEngine(SessionConfig config) : config_(std::move(config)) { config_.validate(); }

  const SessionConfig& config() const { return config_; }

  FrameUpdate tick(const LatestPoseStore::Snapshot& snapshot, Timestamp now,
                   std::vector<EventFlag> events = {}) {
    const PoseSet fresh = LatestPoseStore::fresh_latest(snapshot, now, config_.staleness_us());
    FrameUpdate f;
    f.tick = next_tick_++;
    f.timestamp_us = now;
    for (EntityId id : kAllEntities) {
      f.stale[index_of(id)] = !fresh.has(id);
      if (fresh.has(id)) f.pose_timestamps[index_of(id)] = fresh[id]->timestamp_us;
    }
    for (auto& e : events) {
      e.tick = f.tick;
      f.events.push_back(e);
    }

    try {
      FrameGeometry g = compute_geometry(config_, fresh);
      if (g.coverage.overflow > 0.0) {
        f.events.push_back({EventKind::silhouette_offscreen, f.tick, g.coverage.overflow});
      }
      last_geometry_ = g;
      f.geometry = std::move(g);
    } catch (const StaleEntityError& e) {
      f.status = FrameStatus::stale;
      f.message = e.what();
      f.geometry = last_geometry_;
      f.events.push_back({EventKind::stale, f.tick, 0.0});
    } catch (const Error& e) {
      f.status = FrameStatus::invalid;
      f.message = e.what();
      f.geometry = last_geometry_;
    }
    return f;
  }

  std::optional<FrameGeometry> last_geometry() const { return last_geometry_; }

private:
  SessionConfig config_;
  std::uint64_t next_tick_ = 0;
  std::optional<FrameGeometry> last_geometry_;
};

/// Frame for hypothetical poses and screen size; touches no session state.
inline FrameUpdate what_if(SessionConfig config, const PoseSet& poses,
                           std::optional<PanelDims> screen = std::nullopt) {
  if (screen) {
    config.mirror_width = screen->width;
    config.mirror_height = screen->height;
    // The default mount tracks the top-center of whatever glass is configured.
  }
  config.validate();
  FrameUpdate f;
  for (EntityId id : kAllEntities) {
    f.stale[index_of(id)] = !poses.has(id);
    if (poses.has(id)) f.pose_timestamps[index_of(id)] = poses[id]->timestamp_us;
  }
  f.geometry = compute_geometry(config, poses);
  return f;
}

// ---------------------------------------------------------------------------
// Deterministic replay
// ---------------------------------------------------------------------------

/// Runs a trace through the full pipeline on a virtual clock: ticks at
/// t0 + k * period, each after ingesting every message stamped <= the tick
/// time. Identical trace and config give bit-identical frames.
inline std::vector<FrameUpdate> run_deterministic(const SessionConfig& config, const PoseTrace& trace) {
  check_header(trace.header, config);
  std::vector<FrameUpdate> frames;
  if (trace.messages.empty()) return frames;

  LatestPoseStore store;
  PosePipeline pipeline(config, store);
  SessionEngine engine(config);
  const Timestamp period = config.tick_period_us();
  const Timestamp t0 = trace.messages.front().timestamp_us;
  const Timestamp t_end = trace.messages.back().timestamp_us;

  std::size_t next = 0;
  for (Timestamp t = t0; t <= t_end; t += period) {
    while (next < trace.messages.size() && trace.messages[next].timestamp_us <= t) {
      pipeline.ingest(trace.messages[next++]);
    }
    frames.push_back(engine.tick(*store.snapshot(), t, pipeline.drain_events()));
  }
  return frames;
}

}  // namespace mirrorcast
