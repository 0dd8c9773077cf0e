#pragma once

// Tracker wire format.
//
// Binary frame, little-endian, 56 bytes:
//
//   offset size  field
//   0      4     u32  payload length (always 52)
//   4      1     u8   protocol version (1)
//   5      1     u8   entity id (0..5, see EntityId)
//   6      2     u16  reserved, must be 0
//   8      4     u32  sender id
//   12     8     u64  sequence number
//   20     8     i64  timestamp, microseconds
//   28     12    f32  position x, y, z (meters)
//   40     16    f32  orientation w, x, y, z
//
// The JSON form (trace files, simulated-pose endpoint) carries the same
// fields: {"seq","sender","entity","t_us","p":[x,y,z],"q":[w,x,y,z]}.
// Senders open with a one-line JSON handshake, see Handshake.

#include "mirrorcast/core.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <span>
#include <string>
#include <vector>

namespace mirrorcast {

inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kWirePayloadSize = 52;
inline constexpr std::size_t kWireFrameSize = 4 + kWirePayloadSize;

struct PoseMessage {
  std::uint32_t sender = 0;
  std::uint64_t sequence = 0;
  EntityId entity = EntityId::viewer;
  Timestamp timestamp_us = 0;
  std::array<float, 3> position{};
  std::array<float, 4> orientation{1.0f, 0.0f, 0.0f, 0.0f};  // w, x, y, z

  friend bool operator==(const PoseMessage&, const PoseMessage&) = default;
};

/// Base of the decode error taxonomy; `field()` names what was wrong.
class DecodeError : public Error {
public:
  DecodeError(std::string field, const std::string& what)
      : Error(what + " (field: " + field + ")"), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

class TruncatedFrameError : public DecodeError {
public:
  using DecodeError::DecodeError;
};

class UnknownEntityError : public DecodeError {
public:
  using DecodeError::DecodeError;
};

class NonFiniteValueError : public DecodeError {
public:
  using DecodeError::DecodeError;
};

/// Wrong length, version, reserved bits or JSON shape.
class MalformedFrameError : public DecodeError {
public:
  using DecodeError::DecodeError;
};

namespace wire_detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  auto raw = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  out.insert(out.end(), raw.begin(), raw.end());
}

template <typename T>
T get(std::span<const std::uint8_t> in, std::size_t offset) {
  std::array<std::uint8_t, sizeof(T)> raw{};
  std::memcpy(raw.data(), in.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  return std::bit_cast<T>(raw);
}

}  // namespace wire_detail

inline std::vector<std::uint8_t> encode(const PoseMessage& m) {
  using wire_detail::put;
  std::vector<std::uint8_t> out;
  out.reserve(kWireFrameSize);
  put<std::uint32_t>(out, kWirePayloadSize);
  put<std::uint8_t>(out, kWireVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(m.entity));
  put<std::uint16_t>(out, 0);
  put<std::uint32_t>(out, m.sender);
  put<std::uint64_t>(out, m.sequence);
  put<std::int64_t>(out, m.timestamp_us);
  for (float f : m.position) put<float>(out, f);
  for (float f : m.orientation) put<float>(out, f);
  return out;
}

inline PoseMessage decode(std::span<const std::uint8_t> bytes) {
  using wire_detail::get;
  if (bytes.size() < 4) {
    throw TruncatedFrameError("length", "frame shorter than its length prefix");
  }
  const auto length = get<std::uint32_t>(bytes, 0);
  if (length != kWirePayloadSize) {
    throw MalformedFrameError("length", "unexpected payload length " + std::to_string(length));
  }
  if (bytes.size() < kWireFrameSize) {
    throw TruncatedFrameError("payload", "frame truncated at " + std::to_string(bytes.size()) +
                                             " of " + std::to_string(kWireFrameSize) + " bytes");
  }
  if (bytes.size() > kWireFrameSize) {
    throw MalformedFrameError("length", "trailing bytes after frame");
  }
  if (get<std::uint8_t>(bytes, 4) != kWireVersion) {
    throw MalformedFrameError("version", "unsupported protocol version");
  }
  const auto entity = entity_from_code(get<std::uint8_t>(bytes, 5));
  if (!entity) throw UnknownEntityError("entity", "unknown entity id");
  if (get<std::uint16_t>(bytes, 6) != 0) {
    throw MalformedFrameError("reserved", "reserved bits set");
  }

  PoseMessage m;
  m.entity = *entity;
  m.sender = get<std::uint32_t>(bytes, 8);
  m.sequence = get<std::uint64_t>(bytes, 12);
  m.timestamp_us = get<std::int64_t>(bytes, 20);
  static constexpr std::array<const char*, 3> kPosNames = {"position.x", "position.y",
                                                           "position.z"};
  static constexpr std::array<const char*, 4> kRotNames = {"orientation.w", "orientation.x",
                                                           "orientation.y", "orientation.z"};
  for (std::size_t i = 0; i < 3; ++i) {
    m.position[i] = get<float>(bytes, 28 + 4 * i);
    if (!std::isfinite(m.position[i])) throw NonFiniteValueError(kPosNames[i], "non-finite value");
  }
  for (std::size_t i = 0; i < 4; ++i) {
    m.orientation[i] = get<float>(bytes, 40 + 4 * i);
    if (!std::isfinite(m.orientation[i])) {
      throw NonFiniteValueError(kRotNames[i], "non-finite value");
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Pose <-> message
// ---------------------------------------------------------------------------

/// Float32 quaternions carry ~1e-7 rounding; anything further off is rejected.
inline constexpr double kWireQuaternionTolerance = 1e-4;

inline Pose to_pose(const PoseMessage& m) {
  Quat q(m.orientation[0], m.orientation[1], m.orientation[2], m.orientation[3]);
  if (!is_unit(q, kWireQuaternionTolerance)) {
    throw PoseValidityError(std::string("orientation of ") + std::string(to_string(m.entity)) +
                            " is not a unit quaternion");
  }
  q.normalize();
  return Pose{m.entity, Vec3(m.position[0], m.position[1], m.position[2]), q, m.timestamp_us};
}

inline PoseMessage to_message(const Pose& p, std::uint32_t sender, std::uint64_t sequence) {
  PoseMessage m;
  m.sender = sender;
  m.sequence = sequence;
  m.entity = p.entity;
  m.timestamp_us = p.timestamp_us;
  for (int i = 0; i < 3; ++i) m.position[i] = static_cast<float>(p.position[i]);
  m.orientation = {static_cast<float>(p.orientation.w()), static_cast<float>(p.orientation.x()),
                   static_cast<float>(p.orientation.y()), static_cast<float>(p.orientation.z())};
  return m;
}

// ---------------------------------------------------------------------------
// JSON form
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const PoseMessage& m) {
  nlohmann::json j;
  j["seq"] = m.sequence;
  j["sender"] = m.sender;
  j["entity"] = std::string(to_string(m.entity));
  j["t_us"] = m.timestamp_us;
  // Widening to double is exact, and 17 significant digits round-trip.
  j["p"] = {static_cast<double>(m.position[0]), static_cast<double>(m.position[1]),
            static_cast<double>(m.position[2])};
  j["q"] = {static_cast<double>(m.orientation[0]), static_cast<double>(m.orientation[1]),
            static_cast<double>(m.orientation[2]), static_cast<double>(m.orientation[3])};
  return j;
}

namespace wire_detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw TruncatedFrameError(key, "missing field");
  return *it;
}

template <std::size_t N>
std::array<float, N> float_array(const nlohmann::json& j, const char* key) {
  const auto& arr = require(j, key);
  if (!arr.is_array() || arr.size() != N) {
    throw MalformedFrameError(key, "expected an array of " + std::to_string(N) + " numbers");
  }
  std::array<float, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (arr[i].is_null()) throw NonFiniteValueError(key, "non-finite value");
    if (!arr[i].is_number()) throw MalformedFrameError(key, "expected a number");
    const double d = arr[i].get<double>();
    if (!std::isfinite(d)) throw NonFiniteValueError(key, "non-finite value");
    out[i] = static_cast<float>(d);
    if (!std::isfinite(out[i])) throw NonFiniteValueError(key, "value overflows float32");
  }
  return out;
}

template <typename T>
T integer(const nlohmann::json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_number_integer()) throw MalformedFrameError(key, "expected an integer");
  return v.get<T>();
}

}  // namespace wire_detail

inline PoseMessage message_from_json(const nlohmann::json& j) {
  using namespace wire_detail;
  if (!j.is_object()) throw MalformedFrameError("message", "expected a JSON object");
  PoseMessage m;
  m.sequence = integer<std::uint64_t>(j, "seq");
  m.sender = integer<std::uint32_t>(j, "sender");
  const auto& name = require(j, "entity");
  if (!name.is_string()) throw MalformedFrameError("entity", "expected a string");
  const auto entity = entity_from_string(name.get<std::string>());
  if (!entity) throw UnknownEntityError("entity", "unknown entity '" + name.get<std::string>() + "'");
  m.entity = *entity;
  m.timestamp_us = integer<std::int64_t>(j, "t_us");
  m.position = float_array<3>(j, "p");
  m.orientation = float_array<4>(j, "q");
  return m;
}

inline PoseMessage message_from_json_text(std::string_view text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    if (text.empty()) throw TruncatedFrameError("message", "empty input");
    throw MalformedFrameError("message", "invalid JSON");
  }
  return message_from_json(j);
}

// ---------------------------------------------------------------------------
// Handshake
// ---------------------------------------------------------------------------

inline constexpr std::string_view kPoseProtocolName = "mirrorcast-pose";

/// First line a sender transmits. `clock_us` is the sender's clock at send
/// time; the receiver derives a per-sender offset from it.
struct Handshake {
  std::uint32_t sender = 0;
  int version = kWireVersion;
  Timestamp clock_us = 0;
};

inline std::string handshake_line(const Handshake& h) {
  nlohmann::json j = {{"proto", kPoseProtocolName},
                      {"version", h.version},
                      {"sender", h.sender},
                      {"clock_us", h.clock_us},
                      {"units", {{"position", "m"}, {"time", "us"}}}};
  return j.dump();
}

inline Handshake parse_handshake(std::string_view line) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw MalformedFrameError("handshake", "invalid JSON");
  }
  if (j.value("proto", "") != kPoseProtocolName) {
    throw MalformedFrameError("proto", "unknown protocol");
  }
  Handshake h;
  h.version = wire_detail::integer<int>(j, "version");
  if (h.version != kWireVersion) throw MalformedFrameError("version", "unsupported version");
  h.sender = wire_detail::integer<std::uint32_t>(j, "sender");
  h.clock_us = wire_detail::integer<Timestamp>(j, "clock_us");
  const auto& units = j.value("units", nlohmann::json::object());
  if (units.value("position", "m") != "m" || units.value("time", "us") != "us") {
    throw MalformedFrameError("units", "only meters and microseconds are supported");
  }
  return h;
}

}  // namespace mirrorcast
