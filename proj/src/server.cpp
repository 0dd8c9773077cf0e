#include "mirrorcast/server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <future>
#include <iostream>
#include <set>
#include <thread>

namespace mirrorcast {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using udp = asio::ip::udp;
using nlohmann::json;

json config_message(const SessionConfig& config) {
  return {{"type", "config"}, {"protocol", kStreamProtocolVersion}, {"config", to_json(config)}};
}

json error_message(std::string_view code, std::string_view reason) {
  return {{"type", "error"}, {"code", code}, {"reason", reason}};
}

namespace {

Vec3 json_vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    throw PoseValidityError(std::string(what) + " must be an array of 3 numbers");
  }
  Vec3 v(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
  if (!v.allFinite()) throw PoseValidityError(std::string(what) + " is not finite");
  return v;
}

Quat json_quat(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 4) {
    throw PoseValidityError(std::string(what) + " must be an array of 4 numbers [w,x,y,z]");
  }
  Quat q(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
  if (!is_unit(q, kWireQuaternionTolerance)) {
    throw PoseValidityError(std::string(what) + " is not a unit quaternion");
  }
  return q.normalized();
}

/// Value of `key` in the query string of `target`, if any.
std::optional<std::string> query_param(std::string_view target, std::string_view key) {
  const auto q = target.find('?');
  if (q == std::string_view::npos) return std::nullopt;
  std::string_view rest = target.substr(q + 1);
  while (!rest.empty()) {
    const auto amp = rest.find('&');
    const std::string_view pair = rest.substr(0, amp);
    const auto eq = pair.find('=');
    if (pair.substr(0, eq) == key) {
      return std::string(eq == std::string_view::npos ? std::string_view{} : pair.substr(eq + 1));
    }
    if (amp == std::string_view::npos) break;
    rest = rest.substr(amp + 1);
  }
  return std::nullopt;
}

std::string_view path_of(std::string_view target) { return target.substr(0, target.find('?')); }

}  // namespace

WhatIfRequest parse_what_if(const json& body, const PoseSet& current) {
  if (!body.is_object()) throw PoseValidityError("what-if request must be a JSON object");
  WhatIfRequest req;
  req.poses = current;
  if (auto it = body.find("poses"); it != body.end()) {
    if (!it->is_object()) throw PoseValidityError("'poses' must be an object keyed by entity");
    for (auto p = it->begin(); p != it->end(); ++p) {
      auto id = entity_from_string(p.key());
      if (!id) throw PoseValidityError("unknown entity '" + p.key() + "'");
      Pose pose;
      pose.entity = *id;
      pose.position = json_vec3(p.value().at("p"), "p");
      if (p.value().contains("q")) pose.orientation = json_quat(p.value()["q"], "q");
      pose.timestamp_us = p.value().value("t_us", Timestamp{0});
      req.poses.set(pose);
    }
  }
  if (auto it = body.find("screen"); it != body.end()) {
    if (it->contains("diagonal_in")) {
      const double aw = it->value("aspect_w", 16.0), ah = it->value("aspect_h", 9.0);
      req.screen = panel_from_diagonal(it->at("diagonal_in").get<double>(), aw, ah);
    } else {
      req.screen = PanelDims{it->at("width").get<double>(), it->at("height").get<double>()};
    }
  }
  return req;
}

// ---------------------------------------------------------------------------

struct SessionServer::Impl {
  class WsSession;
  class HttpSession;

  asio::io_context ioc;
  SessionConfig config;
  Options options;
  LatestPoseStore store;
  PosePipeline pipeline;
  SessionEngine engine;

  tcp::acceptor acceptor{ioc};
  udp::socket udp_socket{ioc};
  std::array<std::uint8_t, 2048> udp_buffer{};
  udp::endpoint udp_sender;

  std::set<std::shared_ptr<WsSession>> sessions;  // network thread only
  std::atomic<std::size_t> client_count{0};

  mutable std::mutex frame_mutex;
  std::optional<FrameUpdate> latest_frame;
  std::shared_ptr<const std::string> latest_text;

  std::mutex tick_mutex;
  std::condition_variable tick_cv;
  bool pose_pending = false;
  bool stopping = false;
  Timestamp newest_trigger = 0;    // newest trigger pose timestamp seen
  Timestamp consumed_trigger = 0;  // newest_trigger as of the last tick
  std::chrono::steady_clock::time_point trigger_arrival;

  std::mutex sim_mutex;
  std::map<std::uint32_t, std::uint64_t> sim_sequence;

  std::atomic<std::uint64_t> ticks{0};
  std::atomic<std::uint64_t> clients_connected{0};
  std::atomic<std::uint64_t> clients_dropped_slow{0};
  std::atomic<std::uint64_t> clients_rejected{0};
  std::atomic<std::uint64_t> decode_errors{0};

  std::thread network_thread;
  std::thread tick_thread;
  bool running = false;

  Impl(SessionConfig c, Options o)
      : config(std::move(c)), options(std::move(o)), pipeline(config, store), engine(config) {}

  // -- ingest --------------------------------------------------------------

  /// Timestamp of an accepted viewer or head pose, which may pull the next
  /// tick forward.
  std::optional<Timestamp> accept(const PoseMessage& msg) {
    auto pose = pipeline.ingest(msg, monotonic_now_us());
    if (!pose) return std::nullopt;
    if (options.on_message) options.on_message(msg);
    if (pose->entity != EntityId::viewer && pose->entity != EntityId::player_head) return std::nullopt;
    return pose->timestamp_us;
  }

  void wake_tick(std::optional<Timestamp> stamp) {
    if (!stamp) return;
    bool notify = false;
    {
      std::lock_guard lock(tick_mutex);
      newest_trigger = std::max(newest_trigger, *stamp);
      trigger_arrival = std::chrono::steady_clock::now();
      // Poses from the sample the last tick already used do not re-arm it.
      if (*stamp > consumed_trigger + options.burst_window_us) notify = pose_pending = true;
    }
    if (notify) tick_cv.notify_one();
  }

  void ingest(const PoseMessage& msg) { wake_tick(accept(msg)); }

  static std::optional<Timestamp> newest(std::optional<Timestamp> a, std::optional<Timestamp> b) {
    if (!a) return b;
    if (!b) return a;
    return std::max(*a, *b);
  }

  std::optional<Timestamp> handle_datagram(std::span<const std::uint8_t> bytes) {
    try {
      if (!bytes.empty() && bytes[0] == '{') {
        const Handshake h = parse_handshake(
            std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
        pipeline.set_clock_offset(h.sender, monotonic_now_us() - h.clock_us);
        return std::nullopt;
      }
      return accept(decode(bytes));
    } catch (const DecodeError&) {
      ++decode_errors;
      return std::nullopt;
    }
  }

  void do_udp_receive() {
    udp_socket.async_receive_from(asio::buffer(udp_buffer), udp_sender,
                                  [this](beast::error_code ec, std::size_t n) {
                                    if (ec == asio::error::operation_aborted) return;
                                    if (!ec) {
                                      auto wake = handle_datagram({udp_buffer.data(), n});
                                      // A tracker sends one datagram per entity back to back;
                                      // take the whole burst before waking the tick.
                                      while (udp_socket.available(ec) > 0 && !ec) {
                                        n = udp_socket.receive_from(asio::buffer(udp_buffer), udp_sender, 0, ec);
                                        if (ec) break;
                                        wake = newest(wake, handle_datagram({udp_buffer.data(), n}));
                                      }
                                      wake_tick(wake);
                                    }
                                    if (udp_socket.is_open()) do_udp_receive();
                                  });
  }

  // -- ticks ---------------------------------------------------------------

  void tick_loop() {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(
        std::chrono::duration<double>(1.0 / config.tick_rate_hz));
    const auto early = std::chrono::duration_cast<clock::duration>(period * options.early_tick_fraction);
    auto last = clock::now();
    for (;;) {
      {
        std::unique_lock lock(tick_mutex);
        const auto deadline = last + period;
        const auto earliest = last + early;
        if (tick_cv.wait_until(lock, earliest, [this] { return stopping; })) return;
        // Condition-variable wakeups overshoot by a millisecond or more under
        // load, so wait coarsely and yield through the final stretch.
        const auto coarse = deadline - std::chrono::milliseconds(1);
        tick_cv.wait_until(lock, coarse, [this] { return stopping || pose_pending; });
        while (!stopping && !pose_pending && clock::now() < deadline) {
          lock.unlock();
          std::this_thread::yield();
          lock.lock();
        }
        if (stopping) return;
        // Let the rest of the triggering sample arrive; each new trigger
        // pose pushes the settle point out, up to the deadline.
        const auto coalesce = std::chrono::microseconds(options.coalesce_us);
        while (!stopping && pose_pending && clock::now() < std::min(deadline, trigger_arrival + coalesce)) {
          lock.unlock();
          std::this_thread::yield();
          lock.lock();
        }
        if (stopping) return;
        pose_pending = false;
        consumed_trigger = newest_trigger;
      }
      last = clock::now();
      do_tick();
    }
  }

  void do_tick() {
    auto snapshot = store.snapshot();
    FrameUpdate frame = engine.tick(*snapshot, monotonic_now_us(), pipeline.drain_events());
    auto text = std::make_shared<const std::string>(to_json(frame).dump());
    {
      std::lock_guard lock(frame_mutex);
      latest_frame = std::move(frame);
      latest_text = text;
    }
    ++ticks;
    asio::post(ioc, [this, text] { broadcast(text); });
  }

  void broadcast(const std::shared_ptr<const std::string>& text);
  void register_session(const std::shared_ptr<WsSession>& s);
  void unregister(const std::shared_ptr<WsSession>& s);

  // -- http ----------------------------------------------------------------

  http::response<http::string_body> handle_http(const http::request<http::string_body>& req);

  PoseSet current_poses() const {
    return LatestPoseStore::fresh_latest(*store.snapshot(), monotonic_now_us(),
                                         config.staleness_us());
  }

  void do_accept();
};

// ---------------------------------------------------------------------------
// WebSocket client
// ---------------------------------------------------------------------------

class SessionServer::Impl::WsSession : public std::enable_shared_from_this<WsSession> {
public:
  WsSession(tcp::socket&& socket, Impl& server) : ws_(std::move(socket)), server_(server) {}

  void run(http::request<http::string_body> req) {
    requested_ = query_param(std::string_view(req.target().data(), req.target().size()), "protocol");
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

  void send(std::shared_ptr<const std::string> text) {
    if (closed_) return;
    if (queue_.size() >= server_.options.max_client_queue) {
      ++server_.clients_dropped_slow;
      close();
      return;
    }
    queue_.push_back(std::move(text));
    if (!writing_) do_write();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    queue_.clear();
    beast::error_code ignored;
    beast::get_lowest_layer(ws_).socket().shutdown(tcp::socket::shutdown_both, ignored);
    beast::get_lowest_layer(ws_).socket().close(ignored);
    server_.unregister(shared_from_this());
  }

private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    if (requested_ && *requested_ != std::to_string(kStreamProtocolVersion)) {
      ++server_.clients_rejected;
      auto text = std::make_shared<const std::string>(
          error_message("protocol_mismatch", "server speaks protocol " +
                                                 std::to_string(kStreamProtocolVersion) +
                                                 ", client requested " + *requested_)
              .dump());
      ws_.text(true);
      ws_.async_write(asio::buffer(*text), [self = shared_from_this(), text](beast::error_code, std::size_t) {
        self->ws_.async_close(websocket::close_reason(websocket::close_code::policy_error, "protocol mismatch"),
                              [self](beast::error_code) {});
      });
      return;
    }
    server_.register_session(shared_from_this());
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->close();
        return;
      }
      self->buffer_.consume(self->buffer_.size());
      self->do_read();
    });
  }

  void do_write() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(asio::buffer(*queue_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      self->writing_ = false;
                      if (ec) {
                        self->close();
                        return;
                      }
                      if (!self->queue_.empty()) self->queue_.pop_front();
                      if (!self->queue_.empty() && !self->closed_) self->do_write();
                    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  Impl& server_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  std::optional<std::string> requested_;
  bool writing_ = false;
  bool closed_ = false;

  friend struct SessionServer::Impl;
};

// ---------------------------------------------------------------------------
// HTTP connection (upgrades to WebSocket when asked)
// ---------------------------------------------------------------------------

class SessionServer::Impl::HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
  HttpSession(tcp::socket&& socket, Impl& server) : stream_(std::move(socket)), server_(server) {}

  void run() { do_read(); }

private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec == http::error::end_of_stream) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (ec) return;
    if (websocket::is_upgrade(req_)) {
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), server_)->run(std::move(req_));
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>(server_.handle_http(req_));
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (res->need_eof()) {
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
      self->do_read();
    });
  }

  beast::tcp_stream stream_;
  Impl& server_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

// ---------------------------------------------------------------------------

void SessionServer::Impl::broadcast(const std::shared_ptr<const std::string>& text) {
  // Copy: send() may unregister slow clients while iterating.
  auto targets = sessions;
  for (const auto& s : targets) s->send(text);
}

void SessionServer::Impl::do_accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec == asio::error::operation_aborted) return;
    if (!ec) {
      // Frames are small and latency bound; Nagle would hold them for ACKs.
      socket.set_option(tcp::no_delay(true), ec);
      std::make_shared<HttpSession>(std::move(socket), *this)->run();
    }
    if (acceptor.is_open()) do_accept();
  });
}

http::response<http::string_body> SessionServer::Impl::handle_http(
    const http::request<http::string_body>& req) {
  auto reply = [&](http::status status, const json& body) {
    http::response<http::string_body> res{status, req.version()};
    res.set(http::field::content_type, "application/json");
    res.set(http::field::access_control_allow_origin, "*");
    res.keep_alive(req.keep_alive());
    res.body() = body.dump();
    res.prepare_payload();
    return res;
  };
  const std::string_view path = path_of(std::string_view(req.target().data(), req.target().size()));

  if (req.method() == http::verb::options) {
    http::response<http::string_body> res{http::status::no_content, req.version()};
    res.set(http::field::access_control_allow_origin, "*");
    res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
    res.set(http::field::access_control_allow_headers, "Content-Type");
    res.keep_alive(req.keep_alive());
    res.prepare_payload();
    return res;
  }
  if (req.method() == http::verb::get && path == "/health") {
    return reply(http::status::ok, {{"status", "ok"},
                                    {"ticks", ticks.load()},
                                    {"clients", client_count.load()},
                                    {"protocol", kStreamProtocolVersion}});
  }
  if (req.method() == http::verb::get && path == "/config") {
    return reply(http::status::ok, config_message(config));
  }
  if (req.method() == http::verb::post && path == "/simulated-pose") {
    try {
      json body = json::parse(req.body(), nullptr, false);
      if (body.is_discarded() || !body.is_object()) {
        throw MalformedFrameError("body", "expected a JSON object");
      }
      if (!body.contains("sender")) body["sender"] = 0xFFFF0000u;
      const auto sender = body["sender"].is_number_unsigned() ? body["sender"].get<std::uint32_t>() : 0u;
      if (!body.contains("t_us")) body["t_us"] = monotonic_now_us();
      {
        std::lock_guard lock(sim_mutex);
        auto& seq = sim_sequence[sender];
        if (!body.contains("seq")) body["seq"] = ++seq;
        else if (body["seq"].is_number_unsigned()) seq = std::max(seq, body["seq"].get<std::uint64_t>());
      }
      const PoseMessage msg = message_from_json(body);
      const auto before = pipeline.counters().accepted;
      ingest(msg);
      const bool accepted = pipeline.counters().accepted > before;
      return reply(http::status::accepted, {{"accepted", accepted}});
    } catch (const DecodeError& e) {
      json err = error_message("decode", e.what());
      err["field"] = e.field();
      return reply(http::status::bad_request, err);
    }
  }
  if (req.method() == http::verb::post && path == "/what-if") {
    try {
      json body = json::parse(req.body(), nullptr, false);
      if (body.is_discarded()) throw PoseValidityError("what-if body is not valid JSON");
      const WhatIfRequest request = parse_what_if(body, current_poses());
      FrameUpdate f = mirrorcast::what_if(config, request.poses, request.screen);
      return reply(http::status::ok, to_json(f));
    } catch (const Error& e) {
      return reply(http::status::bad_request, error_message("what_if", e.what()));
    } catch (const json::exception& e) {
      return reply(http::status::bad_request, error_message("what_if", e.what()));
    }
  }
  return reply(http::status::not_found, error_message("not_found", std::string(path)));
}

void SessionServer::Impl::register_session(const std::shared_ptr<WsSession>& s) {
  sessions.insert(s);
  ++client_count;
  ++clients_connected;
  s->send(std::make_shared<const std::string>(config_message(config).dump()));
  std::shared_ptr<const std::string> latest;
  {
    std::lock_guard lock(frame_mutex);
    latest = latest_text;
  }
  if (latest) s->send(latest);
}

void SessionServer::Impl::unregister(const std::shared_ptr<WsSession>& s) {
  if (sessions.erase(s) > 0) --client_count;
}

// ---------------------------------------------------------------------------

SessionServer::SessionServer(SessionConfig config) : SessionServer(std::move(config), Options{}) {}

SessionServer::SessionServer(SessionConfig config, Options options) {
  config.validate();
  impl_ = std::make_unique<Impl>(std::move(config), std::move(options));
}

SessionServer::~SessionServer() { stop(); }

void SessionServer::start() {
  Impl& s = *impl_;
  if (s.running) return;
  beast::error_code ec;
  const auto address = asio::ip::make_address(s.options.bind_address, ec);
  if (ec) throw PortBindError("invalid bind address '" + s.options.bind_address + "'");

  const tcp::endpoint tcp_ep(address, static_cast<unsigned short>(s.config.serve_port));
  s.acceptor.open(tcp_ep.protocol(), ec);
  if (!ec) s.acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) s.acceptor.bind(tcp_ep, ec);
  if (!ec) s.acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) {
    throw PortBindError("cannot bind serve port " + std::to_string(s.config.serve_port) + ": " +
                        ec.message());
  }
  const udp::endpoint udp_ep(address, static_cast<unsigned short>(s.config.ingest_port));
  s.udp_socket.open(udp_ep.protocol(), ec);
  if (!ec) s.udp_socket.bind(udp_ep, ec);
  if (ec) {
    s.acceptor.close();
    throw PortBindError("cannot bind ingest port " + std::to_string(s.config.ingest_port) + ": " +
                        ec.message());
  }

  s.do_accept();
  s.do_udp_receive();
  s.stopping = false;
  s.running = true;
  s.network_thread = std::thread([&s] { s.ioc.run(); });
  s.tick_thread = std::thread([&s] { s.tick_loop(); });
}

void SessionServer::stop() {
  if (!impl_) return;
  Impl& s = *impl_;
  if (!s.running) return;
  {
    std::lock_guard lock(s.tick_mutex);
    s.stopping = true;
  }
  s.tick_cv.notify_all();
  s.tick_thread.join();

  std::promise<void> closed;
  asio::post(s.ioc, [&s, &closed] {
    beast::error_code ignored;
    s.acceptor.close(ignored);
    s.udp_socket.close(ignored);
    auto all = s.sessions;
    for (const auto& session : all) session->close();
    closed.set_value();
  });
  closed.get_future().wait();
  s.ioc.stop();
  s.network_thread.join();
  s.running = false;
}

unsigned short SessionServer::ingest_port() const {
  beast::error_code ec;
  return impl_->udp_socket.local_endpoint(ec).port();
}

unsigned short SessionServer::serve_port() const {
  beast::error_code ec;
  return impl_->acceptor.local_endpoint(ec).port();
}

void SessionServer::inject(const PoseMessage& msg) { impl_->ingest(msg); }

std::optional<FrameUpdate> SessionServer::latest_frame() const {
  std::lock_guard lock(impl_->frame_mutex);
  return impl_->latest_frame;
}

std::size_t SessionServer::client_count() const { return impl_->client_count.load(); }

SessionServer::Stats SessionServer::stats() const {
  Stats st;
  st.ticks = impl_->ticks.load();
  st.clients_connected = impl_->clients_connected.load();
  st.clients_dropped_slow = impl_->clients_dropped_slow.load();
  st.clients_rejected = impl_->clients_rejected.load();
  st.decode_errors = impl_->decode_errors.load();
  st.pipeline = impl_->pipeline.counters();
  return st;
}

const SessionConfig& SessionServer::config() const { return impl_->config; }

FrameUpdate SessionServer::what_if(const WhatIfRequest& request) const {
  return mirrorcast::what_if(impl_->config, request.poses, request.screen);
}

}  // namespace mirrorcast
