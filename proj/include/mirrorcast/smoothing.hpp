#pragma once

// First-order exponential position filter per entity. Orientation passes
// through unsmoothed.

#include "mirrorcast/core.hpp"

#include <cmath>
#include <optional>

namespace mirrorcast {

inline constexpr double kDefaultSmoothingTau = 0.030;  // seconds
inline constexpr double kMaxSmoothingTau = 0.5;

struct SmootherState {
  double tau_s = kDefaultSmoothingTau;
  bool initialized = false;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();  // m/s, derivative of the filtered position
  Timestamp timestamp_us = 0;
  std::uint64_t dropped_out_of_order = 0;

  SmootherState() = default;
  explicit SmootherState(double tau) : tau_s(tau) {
    if (!(tau >= 0.0 && tau <= kMaxSmoothingTau)) {
      throw ConfigError("smoothing tau must be within [0, 0.5] s");
    }
  }
};

struct SmoothResult {
  SmootherState state;
  std::optional<Pose> pose;  // empty when the sample was dropped
};

/// Blends `raw` into the filter. Samples older than the filter state are
/// dropped and counted.
inline SmoothResult smooth(SmootherState state, const Pose& raw) {
  if (state.initialized && raw.timestamp_us < state.timestamp_us) {
    ++state.dropped_out_of_order;
    return {state, std::nullopt};
  }
  if (!state.initialized || state.tau_s == 0.0) {
    if (state.initialized && raw.timestamp_us > state.timestamp_us) {
      state.velocity = (raw.position - state.position) /
                       (1e-6 * static_cast<double>(raw.timestamp_us - state.timestamp_us));
    }
    state.initialized = true;
    state.position = raw.position;
    state.timestamp_us = raw.timestamp_us;
    return {state, raw};
  }

  const double dt = 1e-6 * static_cast<double>(raw.timestamp_us - state.timestamp_us);
  const double alpha = 1.0 - std::exp(-dt / state.tau_s);
  const Vec3 previous = state.position;
  state.position += alpha * (raw.position - state.position);
  if (dt > 0.0) state.velocity = (state.position - previous) / dt;
  state.timestamp_us = raw.timestamp_us;

  Pose out = raw;
  out.position = state.position;
  return {state, out};
}

/// Filter bank keyed by entity.
class PoseSmoother {
public:
  explicit PoseSmoother(double tau = kDefaultSmoothingTau) {
    states_.fill(SmootherState(tau));
  }

  std::optional<Pose> push(const Pose& raw) {
    auto result = smooth(states_[index_of(raw.entity)], raw);
    states_[index_of(raw.entity)] = result.state;
    return result.pose;
  }

  /// Forgets the history of one entity, e.g. after a teleport.
  void reset(EntityId id) {
    states_[index_of(id)] = SmootherState(states_[index_of(id)].tau_s);
  }

  const SmootherState& state(EntityId id) const { return states_[index_of(id)]; }

  std::uint64_t dropped() const {
    std::uint64_t n = 0;
    for (const auto& s : states_) n += s.dropped_out_of_order;
    return n;
  }

private:
  std::array<SmootherState, kEntityCount> states_{};
};

}  // namespace mirrorcast
