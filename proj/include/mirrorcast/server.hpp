#pragma once

// Live session service.
//
//   UDP  :ingest  binary PoseMessage datagrams, or a JSON handshake line
//   TCP  :serve   WebSocket stream (JSON text frames) and a small HTTP API:
//                   GET  /health
//                   GET  /config
//                   POST /simulated-pose   JSON PoseMessage ("t_us"/"seq" optional)
//                   POST /what-if          {"poses":{...}, "screen":{...}}
//
// WebSocket clients may request a protocol version with "?protocol=N" on
// the upgrade target. On join a client receives {"type":"config",...}
// followed by the latest {"type":"frame",...}, then every frame as it is
// produced. Mismatched versions get {"type":"error",...} and a close.

#include "mirrorcast/session.hpp"

#include <chrono>
#include <functional>
#include <memory>

namespace mirrorcast {

inline constexpr int kStreamProtocolVersion = 1;

class ServerError : public Error {
public:
  using Error::Error;
};

class PortBindError : public ServerError {
public:
  using ServerError::ServerError;
};

/// Receiver clock: CLOCK_MONOTONIC in microseconds, shared by all local processes.
inline Timestamp monotonic_now_us() {
  return std::chrono::duration_cast<std::chrono::microseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

nlohmann::json config_message(const SessionConfig& config);
nlohmann::json error_message(std::string_view code, std::string_view reason);

/// Parses the body of POST /what-if. Poses missing from the request are
/// taken from `current`.
struct WhatIfRequest {
  PoseSet poses;
  std::optional<PanelDims> screen;
};
WhatIfRequest parse_what_if(const nlohmann::json& body, const PoseSet& current);

class SessionServer {
public:
  struct Options {
    std::string bind_address = "127.0.0.1";
    /// A viewer or player pose newer than the last tick's input fires the
    /// next tick as soon as this fraction of a period has passed, which
    /// phase-locks ticks to the tracker.
    double early_tick_fraction = 0.8;
    /// Trigger poses stamped within this of the last tick's newest input
    /// belong to the same sample and do not fire another tick.
    Timestamp burst_window_us = 2000;
    /// An early tick waits this long after the newest trigger pose so the
    /// rest of that sample's datagrams land in the same frame.
    Timestamp coalesce_us = 500;
    std::size_t max_client_queue = 64;
    /// Called for every accepted raw message, after clock-offset correction.
    std::function<void(const PoseMessage&)> on_message;
  };

  struct Stats {
    std::uint64_t ticks = 0;
    std::uint64_t clients_connected = 0;
    std::uint64_t clients_dropped_slow = 0;
    std::uint64_t clients_rejected = 0;
    std::uint64_t decode_errors = 0;
    PosePipeline::Counters pipeline;
  };

  explicit SessionServer(SessionConfig config);
  SessionServer(SessionConfig config, Options options);
  ~SessionServer();

  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  /// Binds both ports (0 picks a free one) and starts the network and tick
  /// threads. Throws PortBindError.
  void start();
  void stop();

  unsigned short ingest_port() const;
  unsigned short serve_port() const;

  /// Feeds a message as if it had arrived on the ingest socket.
  void inject(const PoseMessage& msg);

  std::optional<FrameUpdate> latest_frame() const;
  std::size_t client_count() const;
  Stats stats() const;
  const SessionConfig& config() const;

  /// Evaluates hypothetical poses/screen without touching the live session.
  FrameUpdate what_if(const WhatIfRequest& request) const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mirrorcast
