#pragma once

// .posetrace files: one JSON header line, then one PoseMessage per line in
// timestamp order. Timestamps are microseconds.

#include "mirrorcast/config.hpp"
#include "mirrorcast/pose_wire.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

namespace mirrorcast {

inline constexpr std::string_view kTraceFormat = "mirrorcast-posetrace";
inline constexpr int kTraceVersion = 1;

class TraceError : public Error {
public:
  using Error::Error;
};

class HeaderMismatchError : public TraceError {
public:
  explicit HeaderMismatchError(std::vector<std::string> diffs)
      : TraceError(summary(diffs)), diffs_(std::move(diffs)) {}
  const std::vector<std::string>& diffs() const noexcept { return diffs_; }

private:
  static std::string summary(const std::vector<std::string>& diffs) {
    std::string s = "trace header does not match the session config:";
    for (const auto& d : diffs) s += "\n  " + d;
    return s;
  }
  std::vector<std::string> diffs_;
};

struct TraceHeader {
  double mirror_width = 0.531;
  double mirror_height = 0.299;
  BodyModel body;
  Timestamp start_epoch_us = 0;

  static TraceHeader from_config(const SessionConfig& c, Timestamp start_epoch_us = 0) {
    return TraceHeader{c.mirror_width, c.mirror_height, c.body, start_epoch_us};
  }
};

struct PoseTrace {
  TraceHeader header;
  std::vector<PoseMessage> messages;

  void sort() {
    std::stable_sort(messages.begin(), messages.end(), [](const auto& a, const auto& b) {
      return a.timestamp_us < b.timestamp_us;
    });
  }

  bool is_sorted() const {
    return std::is_sorted(messages.begin(), messages.end(), [](const auto& a, const auto& b) {
      return a.timestamp_us < b.timestamp_us;
    });
  }

  Timestamp duration_us() const {
    return messages.empty() ? 0 : messages.back().timestamp_us - messages.front().timestamp_us;
  }
};

inline nlohmann::json to_json(const TraceHeader& h) {
  return {{"format", kTraceFormat},
          {"version", kTraceVersion},
          {"coordinates",
           {{"handedness", "right"}, {"up", "+y"}, {"position_units", "m"}, {"time_units", "us"}}},
          {"mirror", {{"width", h.mirror_width}, {"height", h.mirror_height}}},
          {"body",
           {{"shoulder_half_width", h.body.shoulder_half_width},
            {"head_radius", h.body.head_radius},
            {"arm_radius", h.body.arm_radius}}},
          {"start_epoch_us", h.start_epoch_us}};
}

inline TraceHeader header_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != kTraceFormat) {
    throw TraceError("first line is not a posetrace header");
  }
  if (j.value("version", 0) != kTraceVersion) throw TraceError("unsupported posetrace version");
  try {
    TraceHeader h;
    const auto& m = j.at("mirror");
    h.mirror_width = m.at("width").get<double>();
    h.mirror_height = m.at("height").get<double>();
    const auto& b = j.at("body");
    h.body.shoulder_half_width = b.at("shoulder_half_width").get<double>();
    h.body.head_radius = b.at("head_radius").get<double>();
    h.body.arm_radius = b.at("arm_radius").get<double>();
    h.start_epoch_us = j.value("start_epoch_us", Timestamp{0});
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw TraceError(std::string("malformed posetrace header: ") + e.what());
  }
}

inline void write_trace(std::ostream& out, const PoseTrace& trace) {
  out << to_json(trace.header).dump() << '\n';
  for (const auto& m : trace.messages) out << to_json(m).dump() << '\n';
}

inline std::string trace_to_string(const PoseTrace& trace) {
  std::ostringstream out;
  write_trace(out, trace);
  return out.str();
}

inline PoseTrace read_trace(std::istream& in) {
  PoseTrace trace;
  std::string line;
  if (!std::getline(in, line)) throw TraceError("empty posetrace");
  nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded()) throw TraceError("posetrace header is not valid JSON");
  trace.header = header_from_json(header);

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      trace.messages.push_back(message_from_json_text(line));
    } catch (const DecodeError& e) {
      throw TraceError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!trace.is_sorted()) throw TraceError("posetrace messages are not in timestamp order");
  return trace;
}

inline PoseTrace read_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TraceError("cannot open trace '" + path + "'");
  return read_trace(in);
}

inline void write_trace_file(const std::string& path, const PoseTrace& trace) {
  std::ofstream out(path);
  if (!out) throw TraceError("cannot write trace '" + path + "'");
  write_trace(out, trace);
}

/// Refuses traces recorded with a different mirror or body.
inline void check_header(const TraceHeader& h, const SessionConfig& c, double tol = 1e-9) {
  std::vector<std::string> diffs;
  auto cmp = [&](const char* name, double trace_value, double config_value) {
    if (std::abs(trace_value - config_value) > tol) {
      std::ostringstream s;
      s << name << ": trace " << trace_value << " vs config " << config_value;
      diffs.push_back(s.str());
    }
  };
  cmp("mirror.width", h.mirror_width, c.mirror_width);
  cmp("mirror.height", h.mirror_height, c.mirror_height);
  cmp("body.shoulder_half_width", h.body.shoulder_half_width, c.body.shoulder_half_width);
  cmp("body.head_radius", h.body.head_radius, c.body.head_radius);
  cmp("body.arm_radius", h.body.arm_radius, c.body.arm_radius);
  if (!diffs.empty()) throw HeaderMismatchError(std::move(diffs));
}

/// Collects messages from a live stream into a trace.
class TraceRecorder {
public:
  explicit TraceRecorder(TraceHeader header) { trace_.header = header; }

  void record(const PoseMessage& m) { trace_.messages.push_back(m); }

  PoseTrace finish() {
    trace_.sort();
    return std::move(trace_);
  }

private:
  PoseTrace trace_;
};

/// Emits the trace's messages with their original spacing divided by
/// `speed`, measured against a steady clock. Returns the number emitted.
inline std::size_t replay(const PoseTrace& trace, double speed,
                          const std::function<void(const PoseMessage&)>& emit,
                          const std::function<bool()>& cancelled = {}) {
  if (!(speed > 0.0)) throw TraceError("replay speed must be positive");
  if (trace.messages.empty()) return 0;
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const Timestamp t0 = trace.messages.front().timestamp_us;
  std::size_t n = 0;
  for (const auto& m : trace.messages) {
    if (cancelled && cancelled()) break;
    const auto offset = std::chrono::microseconds(
        static_cast<std::int64_t>(static_cast<double>(m.timestamp_us - t0) / speed));
    const auto due = start + offset;
    // Coarse sleep, then yield the last stretch: plain sleep_until
    // overshoots by several milliseconds on a busy machine.
    std::this_thread::sleep_until(due - std::chrono::milliseconds(1));
    while (clock::now() < due) std::this_thread::yield();
    emit(m);
    ++n;
  }
  return n;
}

}  // namespace mirrorcast
