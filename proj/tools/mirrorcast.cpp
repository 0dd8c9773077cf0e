// mirrorcast: run a live session, replay or record traces, validate
// configs and produce analysis reports.
//
// Exit codes: 0 success, 1 usage error, 2 invalid config or input file,
// 3 runtime failure.

#include "mirrorcast/selftest.hpp"
#include "mirrorcast/server.hpp"
#include "mirrorcast/synthetic.hpp"

#include <CLI11.hpp>
#include <boost/asio.hpp>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>
#include <unistd.h>

namespace {

using namespace mirrorcast;
using nlohmann::json;

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kRuntime = 3 };

class InputError : public Error {
public:
  using Error::Error;
};

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

struct Options {
  std::string config_path;
  std::optional<int> port_ingest, port_serve;
  std::optional<double> tick_rate;
  std::optional<std::string> shape;
  bool deterministic = false;
  bool json = false;

  std::string trace_path;
  std::string out_path;
  std::string format = "json";
  std::string host = "127.0.0.1";
  double speed = 1.0;
  double duration = 0.0;
  bool synthetic = false;
  int teleports = 0;
  std::uint64_t seed = 1;
  std::optional<std::uint32_t> sender;
  int samples = 100000;
};

/// Defaults, then the config file, then flags.
SessionConfig resolve_config(const Options& o) {
  json j = json::object();
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw ConfigError("cannot open config file '" + o.config_path + "'");
    j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ConfigError("config file '" + o.config_path + "' is not a JSON object");
    }
  }
  if (o.port_ingest) j["ports"]["ingest"] = *o.port_ingest;
  if (o.port_serve) j["ports"]["serve"] = *o.port_serve;
  if (o.tick_rate) j["tick_rate_hz"] = *o.tick_rate;
  if (o.shape) j["silhouette"]["shape"] = *o.shape;
  if (o.deterministic) j["deterministic"] = true;
  return config_from_json(j);
}

PoseTrace load_trace(const std::string& path) {
  try {
    return read_trace_file(path);
  } catch (const TraceError& e) {
    throw InputError(e.what());
  } catch (const DecodeError& e) {
    throw InputError("trace '" + path + "': " + e.what());
  }
}

void emit(const Options& o, const json& j, const std::string& text) {
  if (o.json) {
    std::cout << j.dump() << '\n';
  } else {
    std::cout << text;
  }
}

// -- serve / record -----------------------------------------------------------

/// Runs until interrupted or `duration` seconds elapse (0 = forever).
void wait_for_stop(double duration) {
  const auto end = std::chrono::steady_clock::now() + std::chrono::duration<double>(duration);
  while (!g_interrupted && (duration <= 0.0 || std::chrono::steady_clock::now() < end)) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

json stats_json(const SessionServer::Stats& s) {
  return {{"ticks", s.ticks},
          {"clients_connected", s.clients_connected},
          {"clients_dropped_slow", s.clients_dropped_slow},
          {"clients_rejected", s.clients_rejected},
          {"decode_errors", s.decode_errors},
          {"poses_accepted", s.pipeline.accepted},
          {"poses_dropped_sequence", s.pipeline.dropped_sequence},
          {"poses_dropped_out_of_order", s.pipeline.dropped_out_of_order},
          {"poses_dropped_clock", s.pipeline.dropped_clock},
          {"poses_invalid", s.pipeline.invalid}};
}

SessionServer::Options server_options(const SessionConfig& config) {
  SessionServer::Options opts;
  // Deterministic sessions tick on a fixed grid.
  if (config.deterministic) opts.early_tick_fraction = 1.0;
  return opts;
}

void announce(const Options& o, const SessionServer& server) {
  const json j = {{"event", "listening"},
                  {"ingest_port", server.ingest_port()},
                  {"serve_port", server.serve_port()},
                  {"tick_rate_hz", server.config().tick_rate_hz}};
  std::ostringstream s;
  s << "mirrorcast: pose ingest udp://127.0.0.1:" << server.ingest_port() << ", stream ws://127.0.0.1:"
    << server.serve_port() << "/stream at " << server.config().tick_rate_hz << " Hz\n";
  emit(o, j, s.str());
  std::cout.flush();
}

int cmd_serve(const Options& o) {
  const SessionConfig config = resolve_config(o);
  SessionServer server(config, server_options(config));
  server.start();
  announce(o, server);
  wait_for_stop(o.duration);
  server.stop();
  const json stats = stats_json(server.stats());
  emit(o, {{"event", "stopped"}, {"stats", stats}}, "mirrorcast: stopped after " + stats["ticks"].dump() + " ticks\n");
  return kOk;
}

int cmd_record(const Options& o) {
  const SessionConfig config = resolve_config(o);
  PoseTrace trace;
  if (o.synthetic) {
    SyntheticSpec spec;
    spec.duration_s = o.duration > 0.0 ? o.duration : 10.0;
    spec.rate_hz = config.tick_rate_hz;
    spec.teleports = o.teleports;
    spec.seed = o.seed;
    trace = make_synthetic_trace(config, spec);
  } else {
    TraceRecorder recorder(TraceHeader::from_config(config, std::chrono::duration_cast<std::chrono::microseconds>(
                                                                std::chrono::system_clock::now().time_since_epoch())
                                                                .count()));
    std::mutex mutex;
    SessionServer::Options opts = server_options(config);
    opts.on_message = [&](const PoseMessage& m) {
      std::lock_guard lock(mutex);
      recorder.record(m);
    };
    SessionServer server(config, opts);
    server.start();
    announce(o, server);
    wait_for_stop(o.duration);
    server.stop();
    std::lock_guard lock(mutex);
    trace = recorder.finish();
  }
  write_trace_file(o.out_path, trace);
  emit(o, {{"event", "recorded"}, {"path", o.out_path}, {"messages", trace.messages.size()},
           {"duration_us", trace.duration_us()}},
       "mirrorcast: wrote " + std::to_string(trace.messages.size()) + " messages to " + o.out_path + "\n");
  return kOk;
}

// -- replay -------------------------------------------------------------------

int cmd_replay(const Options& o) {
  const SessionConfig config = resolve_config(o);
  const PoseTrace trace = load_trace(o.trace_path);
  if (config.deterministic) {
    try {
      check_header(trace.header, config);
    } catch (const HeaderMismatchError& e) {
      throw InputError(e.what());
    }
    const auto frames = run_deterministic(config, trace);
    json digests = json::array();
    std::ostringstream text;
    for (const auto& f : frames) {
      const std::string d = digest(f);
      digests.push_back(d);
      text << f.tick << ' ' << d << '\n';
    }
    const std::string seq = sequence_digest(frames);
    text << "sequence " << seq << '\n';
    emit(o, {{"trace", o.trace_path}, {"frames", frames.size()}, {"sequence_digest", seq}, {"frame_digests", digests}},
         text.str());
    return kOk;
  }

  // Live replay into a running session's ingest port, as one fresh sender
  // whose clock reads the trace's first timestamp at start.
  namespace asio = boost::asio;
  asio::io_context ioc;
  asio::ip::udp::socket sock(ioc, asio::ip::udp::endpoint(asio::ip::udp::v4(), 0));
  boost::system::error_code ec;
  const auto address = asio::ip::make_address(o.host, ec);
  if (ec) throw CLI::ValidationError("--host", "invalid address '" + o.host + "'");
  const asio::ip::udp::endpoint dest(address, static_cast<unsigned short>(config.ingest_port));
  const std::uint32_t sender = o.sender ? *o.sender : 0x52000000u | (static_cast<std::uint32_t>(::getpid()) & 0xFFFFFF);
  const Timestamp t0 = trace.messages.empty() ? 0 : trace.messages.front().timestamp_us;
  const auto start = std::chrono::steady_clock::now();
  sock.send_to(asio::buffer(handshake_line({sender, kWireVersion, t0})), dest);
  std::uint64_t seq = 0;
  PoseTrace scaled = trace;
  // The receiver compares timestamps against its own clock, so the trace
  // clock is stretched to wall time when replaying at another speed.
  for (auto& m : scaled.messages) {
    m.timestamp_us = t0 + static_cast<Timestamp>(static_cast<double>(m.timestamp_us - t0) / o.speed);
  }
  const std::size_t sent = replay(
      scaled, 1.0,
      [&](const PoseMessage& m) {
        PoseMessage out = m;
        out.sender = sender;
        out.sequence = ++seq;
        sock.send_to(asio::buffer(encode(out)), dest);
      },
      [] { return g_interrupted.load(); });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  emit(o, {{"trace", o.trace_path}, {"sent", sent}, {"seconds", seconds}, {"port", config.ingest_port}},
       "mirrorcast: sent " + std::to_string(sent) + " messages to udp://" + o.host + ":" +
           std::to_string(config.ingest_port) + "\n");
  return kOk;
}

// -- analyze ------------------------------------------------------------------

int cmd_analyze(const Options& o) {
  const SessionConfig config = resolve_config(o);
  const PoseTrace trace = load_trace(o.trace_path);
  try {
    check_header(trace.header, config);
  } catch (const HeaderMismatchError& e) {
    throw InputError(e.what());
  }
  const auto frames = run_deterministic(config, trace);
  const bool csv = o.format == "csv";

  std::map<std::string, int> counts = {{"teleport", 0}, {"stale", 0}, {"silhouette_offscreen", 0}};
  std::map<std::string, int> statuses;
  json events = json::array();
  json rows = json::array();
  std::ostringstream table;
  table << std::setprecision(17);
  table << "tick,timestamp_us,status,hfov_deg,vfov_deg,solid_angle_sr,viewer_depth_m,diagonal_in,coverage,overflow,"
           "events\n";
  double hmin = std::numeric_limits<double>::infinity(), hmax = 0.0, hsum = 0.0, cov_sum = 0.0;
  int with_geometry = 0;
  for (const auto& f : frames) {
    ++statuses[std::string(to_string(f.status))];
    std::string kinds;
    for (const auto& e : f.events) {
      const std::string k(to_string(e.kind));
      ++counts[k];
      if (e.kind != EventKind::stale) events.push_back({{"tick", e.tick}, {"kind", k}, {"magnitude", e.magnitude}});
      kinds += (kinds.empty() ? "" : ";") + k;
    }
    json row = {{"tick", f.tick}, {"timestamp_us", f.timestamp_us}, {"status", std::string(to_string(f.status))}};
    table << f.tick << ',' << f.timestamp_us << ',' << to_string(f.status) << ',';
    if (f.geometry && f.status == FrameStatus::ok) {
      const FovReport& r = f.geometry->fov;
      const Coverage& c = f.geometry->coverage;
      row["fov"] = {{"h", r.horizontal_deg}, {"v", r.vertical_deg}, {"solid_angle_sr", r.solid_angle_sr},
                    {"viewer_depth", r.viewer_depth}, {"diagonal_in", r.diagonal_inches}};
      row["coverage"] = {{"on_screen", c.coverage}, {"overflow", c.overflow}};
      table << r.horizontal_deg << ',' << r.vertical_deg << ',' << r.solid_angle_sr << ',' << r.viewer_depth << ','
            << r.diagonal_inches << ',' << c.coverage << ',' << c.overflow;
      hmin = std::min(hmin, r.horizontal_deg);
      hmax = std::max(hmax, r.horizontal_deg);
      hsum += r.horizontal_deg;
      cov_sum += c.coverage;
      ++with_geometry;
    } else {
      table << ",,,,,,";
    }
    table << ',' << kinds << '\n';
    row["events"] = kinds;
    rows.push_back(row);
  }
  json summary = {{"trace", o.trace_path},
                  {"ticks", frames.size()},
                  {"statuses", statuses},
                  {"event_counts", counts},
                  {"hfov_deg", with_geometry ? json{{"min", hmin}, {"max", hmax}, {"mean", hsum / with_geometry}}
                                             : json(nullptr)},
                  {"mean_coverage", with_geometry ? json(cov_sum / with_geometry) : json(nullptr)}};
  const json report = {{"summary", summary}, {"events", events}, {"frames", rows}};

  const std::string body = csv ? table.str() : report.dump(2) + "\n";
  if (!o.out_path.empty()) {
    std::ofstream out(o.out_path);
    if (!out) throw std::runtime_error("cannot write '" + o.out_path + "'");
    out << body;
    emit(o, summary, "mirrorcast: " + std::to_string(frames.size()) + " ticks, " +
                         std::to_string(counts["teleport"]) + " teleports; report written to " + o.out_path + "\n");
  } else if (o.json) {
    std::cout << report.dump() << '\n';
  } else {
    std::cout << body;
  }
  return kOk;
}

// -- validate -----------------------------------------------------------------

int cmd_validate(const Options& o) {
  const SessionConfig config = resolve_config(o);
  json j = {{"valid", true}, {"config", to_json(config)}};
  std::string text = "config ok\n";
  if (!o.trace_path.empty()) {
    const PoseTrace trace = load_trace(o.trace_path);
    try {
      check_header(trace.header, config);
    } catch (const HeaderMismatchError& e) {
      throw InputError(e.what());
    }
    j["trace"] = {{"path", o.trace_path}, {"messages", trace.messages.size()}, {"duration_us", trace.duration_us()}};
    text += "trace ok: " + std::to_string(trace.messages.size()) + " messages\n";
  }
  emit(o, j, text);
  return kOk;
}

// -- selftest -----------------------------------------------------------------

int cmd_selftest(const Options& o) {
  const auto results = selftest::run_all(o.samples);
  const bool ok = selftest::all_passed(results);
  json list = json::array();
  std::ostringstream text;
  for (const auto& r : results) {
    list.push_back(selftest::to_json(r));
    const char* verdict = r.passed ? "PASS" : (r.known_issue ? "FAIL (known)" : "FAIL");
    text << std::left << std::setw(13) << verdict << r.name << "\n             " << r.detail << '\n';
  }
  text << (ok ? "selftest passed\n" : "selftest FAILED\n");
  emit(o, {{"passed", ok}, {"checks", list}}, text.str());
  return ok ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"mirrorcast: spectator window session service"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  app.add_option("--config", o.config_path, "Session config file (JSON)");
  app.add_option("--port-ingest", o.port_ingest, "UDP pose ingest port")->check(CLI::Range(0, 65535));
  app.add_option("--port-serve", o.port_serve, "WebSocket/HTTP port")->check(CLI::Range(0, 65535));
  app.add_option("--tick-rate", o.tick_rate, "Tick rate in Hz");
  app.add_option("--shape", o.shape, "Silhouette shape")
      ->check(CLI::IsMember({"default_oval", "transparent_oval", "narrow_oval", "body_with_arms"}));
  app.add_flag("--deterministic", o.deterministic, "Virtual clock (replay) or fixed tick grid (serve)");
  app.add_flag("--json", o.json, "Machine-readable output");

  auto* serve = app.add_subcommand("serve", "Run a live session");
  serve->add_option("--duration", o.duration, "Stop after this many seconds (default: until interrupted)");

  auto* replay_cmd = app.add_subcommand("replay", "Replay a trace, live or deterministically");
  replay_cmd->add_option("trace", o.trace_path, "Trace file")->required();
  replay_cmd->add_option("--speed", o.speed, "Playback speed factor")->check(CLI::PositiveNumber);
  replay_cmd->add_option("--host", o.host, "Ingest host for live replay");
  replay_cmd->add_option("--sender", o.sender, "Sender id for live replay");

  auto* record = app.add_subcommand("record", "Record tracker input to a trace");
  record->add_option("--out", o.out_path, "Output trace file")->required();
  record->add_option("--duration", o.duration, "Seconds to record (default: until interrupted)");
  record->add_flag("--synthetic", o.synthetic, "Generate a synthetic session instead of listening");
  record->add_option("--teleports", o.teleports, "Synthetic: number of teleport jumps")->check(CLI::NonNegativeNumber);
  record->add_option("--seed", o.seed, "Synthetic: random seed");

  auto* analyze = app.add_subcommand("analyze", "FOV, coverage and event report for a trace");
  analyze->add_option("trace", o.trace_path, "Trace file")->required();
  analyze->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"json", "csv"}));
  analyze->add_option("--out", o.out_path, "Write the report to a file");

  auto* validate = app.add_subcommand("validate", "Check a config (and optionally a trace against it)");
  validate->add_option("trace", o.trace_path, "Trace file to check against the config");

  auto* selftest_cmd = app.add_subcommand("selftest", "Compare the geometry core against reference computations");
  selftest_cmd->add_option("--samples", o.samples, "Reflection-solver samples")->check(CLI::Range(1, 100000000));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (std::find(argv + 1, argv + argc, std::string_view("--json")) != argv + argc) {
      std::cout << json{{"error", "usage"}, {"message", e.what()}, {"exit_code", kUsage}}.dump() << '\n';
    }
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  auto fail = [&](int code, const std::string& kind, const std::string& message) {
    if (o.json) {
      std::cout << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << '\n';
    }
    std::cerr << "error: " << message << '\n';
    return code;
  };

  try {
    if (*serve) return cmd_serve(o);
    if (*replay_cmd) return cmd_replay(o);
    if (*record) return cmd_record(o);
    if (*analyze) return cmd_analyze(o);
    if (*validate) return cmd_validate(o);
    if (*selftest_cmd) return cmd_selftest(o);
  } catch (const CLI::ValidationError& e) {
    return fail(kUsage, "usage", e.what());
  } catch (const ConfigError& e) {
    return fail(kConfig, "config", e.what());
  } catch (const InputError& e) {
    return fail(kConfig, "input", e.what());
  } catch (const std::exception& e) {
    return fail(kRuntime, "runtime", e.what());
  }
  return kUsage;
}
