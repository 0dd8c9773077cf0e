#pragma once

#include "mirrorcast/core.hpp"

#include <algorithm>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace mirrorcast {

inline constexpr Timestamp kDefaultStalenessUs = 200'000;

/// Linear position, spherical orientation; exact at both ends.
inline Pose interpolate(const Pose& a, const Pose& b, Timestamp t) {
  if (t == a.timestamp_us) return a;
  if (t == b.timestamp_us) return b;
  const double u = static_cast<double>(t - a.timestamp_us) /
                   static_cast<double>(b.timestamp_us - a.timestamp_us);
  Pose out = a;
  out.position = a.position + u * (b.position - a.position);
  out.orientation = a.orientation.slerp(u, b.orientation).normalized();
  out.timestamp_us = t;
  return out;
}

/// Time-ordered samples per entity.
class PoseHistory {
public:
  explicit PoseHistory(std::size_t capacity_per_entity = 0) : capacity_(capacity_per_entity) {}

  /// Samples must arrive in non-decreasing time per entity; older ones are
  /// ignored and false is returned.
  bool add(const Pose& p) {
    auto& track = tracks_[index_of(p.entity)];
    if (!track.empty() && p.timestamp_us < track.back().timestamp_us) return false;
    track.push_back(p);
    if (capacity_ > 0 && track.size() > capacity_) track.pop_front();
    return true;
  }

  const std::deque<Pose>& track(EntityId id) const { return tracks_[index_of(id)]; }

  std::optional<Pose> latest(EntityId id) const {
    const auto& track = tracks_[index_of(id)];
    if (track.empty()) return std::nullopt;
    return track.back();
  }

  bool empty() const {
    return std::all_of(tracks_.begin(), tracks_.end(), [](const auto& t) { return t.empty(); });
  }

  std::vector<EntityId> entities() const {
    std::vector<EntityId> out;
    for (EntityId id : kAllEntities) {
      if (!tracks_[index_of(id)].empty()) out.push_back(id);
    }
    return out;
  }

  /// Interpolated pose of one entity, or nothing when no sample lies within
  /// `staleness_us` of t. Past the last sample the last pose is held, never
  /// extrapolated.
  std::optional<Pose> sample(EntityId id, Timestamp t, Timestamp staleness_us) const {
    const auto& track = tracks_[index_of(id)];
    if (track.empty() || t < track.front().timestamp_us) return std::nullopt;
    auto after = std::lower_bound(track.begin(), track.end(), t,
                                  [](const Pose& p, Timestamp ts) { return p.timestamp_us < ts; });
    if (after == track.end()) {
      const Pose& last = track.back();
      if (t - last.timestamp_us > staleness_us) return std::nullopt;
      Pose held = last;
      return held;
    }
    if (after->timestamp_us == t) return *after;
    const Pose& before = *std::prev(after);
    if (std::min(t - before.timestamp_us, after->timestamp_us - t) > staleness_us) {
      return std::nullopt;
    }
    return interpolate(before, *after, t);
  }

  /// Full pose set at t. Every entity in `required` must be fresh, otherwise
  /// StaleEntityError lists the missing ones. Other entities are included
  /// when fresh.
  PoseSet sample_at(Timestamp t, Timestamp staleness_us, std::span<const EntityId> required) const {
    PoseSet set;
    for (EntityId id : kAllEntities) set[id] = sample(id, t, staleness_us);
    std::vector<EntityId> stale;
    for (EntityId id : required) {
      if (!set.has(id)) stale.push_back(id);
    }
    if (!stale.empty()) throw StaleEntityError(std::move(stale));
    return set;
  }

  /// As above, requiring every entity that has ever been seen.
  PoseSet sample_at(Timestamp t, Timestamp staleness_us = kDefaultStalenessUs) const {
    const auto seen = entities();
    return sample_at(t, staleness_us, seen);
  }

private:
  std::size_t capacity_ = 0;
  std::array<std::deque<Pose>, kEntityCount> tracks_{};
};

/// Latest poses shared between ingest threads and the tick loop. Writers
/// publish a fresh immutable snapshot; readers copy the pointer and never
/// observe a partially applied batch.
class LatestPoseStore {
public:
  struct Snapshot {
    PoseHistory history{kHistoryCapacity};
    std::uint64_t version = 0;
  };

  static constexpr std::size_t kHistoryCapacity = 64;

  LatestPoseStore() : current_(std::make_shared<const Snapshot>()) {}

  std::shared_ptr<const Snapshot> snapshot() const {
    std::lock_guard lock(read_mutex_);
    return current_;
  }

  /// Publishes all poses atomically. Returns how many were accepted.
  std::size_t publish(std::span<const Pose> poses) {
    std::lock_guard writer(write_mutex_);
    auto next = std::make_shared<Snapshot>(*snapshot());
    std::size_t accepted = 0;
    for (const Pose& p : poses) accepted += next->history.add(p) ? 1 : 0;
    ++next->version;
    std::shared_ptr<const Snapshot> frozen = std::move(next);
    std::lock_guard lock(read_mutex_);
    current_ = std::move(frozen);
    return accepted;
  }

  bool publish(const Pose& p) { return publish(std::span<const Pose>(&p, 1)) == 1; }

  /// Latest pose per entity with the ones older than the window removed.
  static PoseSet fresh_latest(const Snapshot& snap, Timestamp now, Timestamp staleness_us) {
    PoseSet set;
    for (EntityId id : kAllEntities) {
      auto p = snap.history.latest(id);
      if (p && now - p->timestamp_us <= staleness_us) set[id] = p;
    }
    return set;
  }

private:
  mutable std::mutex read_mutex_;  // guards the pointer swap only
  std::mutex write_mutex_;         // serializes writers
  std::shared_ptr<const Snapshot> current_;
};

}  // namespace mirrorcast
