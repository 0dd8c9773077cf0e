#include "mirrorcast/pose_store.hpp"
#include "mirrorcast/pose_wire.hpp"
#include "mirrorcast/smoothing.hpp"
#include "mirrorcast/trace.hpp"

#include "mirrorcast/oracles.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cstring>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

using namespace mirrorcast;

namespace {

PoseMessage random_message(oracle::Rng& rng) {
  PoseMessage m;
  m.sender = static_cast<std::uint32_t>(rng.engine());
  m.sequence = rng.engine();
  m.entity = static_cast<EntityId>(rng.integer(0, kEntityCount - 1));
  m.timestamp_us = static_cast<Timestamp>(rng.engine());
  for (auto& p : m.position) p = static_cast<float>(rng.uniform(-100, 100));
  const Quat q = rng.rotation();
  m.orientation = {static_cast<float>(q.w()), static_cast<float>(q.x()), static_cast<float>(q.y()),
                   static_cast<float>(q.z())};
  return m;
}

bool bit_equal(const PoseMessage& a, const PoseMessage& b) {
  const auto ea = encode(a), eb = encode(b);
  return ea == eb;
}

template <typename F>
void set_float(std::vector<std::uint8_t>& frame, std::size_t offset, F value) {
  std::memcpy(frame.data() + offset, &value, sizeof(F));
}

Pose head_at(double x, Timestamp t) {
  return make_pose(EntityId::player_head, Vec3(x, 1.7, 1.0), t);
}

}  // namespace

// -- wire ---------------------------------------------------------------------

TEST(Wire, LayoutIsLittleEndian) {
  PoseMessage m;
  m.sender = 0x01020304;
  m.sequence = 7;
  m.entity = EntityId::player_feet;
  m.timestamp_us = -2;
  const auto bytes = encode(m);
  ASSERT_EQ(bytes.size(), kWireFrameSize);
  EXPECT_EQ(bytes[0], 52);
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 2);
  EXPECT_EQ(bytes[8], 0x04);
  EXPECT_EQ(bytes[11], 0x01);
  EXPECT_EQ(bytes[12], 7);
  EXPECT_EQ(bytes[20], 0xFE);
  EXPECT_EQ(bytes[27], 0xFF);
}

TEST(Wire, RoundTripBitExact) {
  oracle::Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const PoseMessage m = random_message(rng);
    const auto bytes = encode(m);
    const PoseMessage back = decode(bytes);
    ASSERT_EQ(back, m);
    ASSERT_EQ(encode(back), bytes);
  }
}

TEST(Wire, JsonRoundTripBitExact) {
  oracle::Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    const PoseMessage m = random_message(rng);
    const PoseMessage back = message_from_json_text(to_json(m).dump());
    ASSERT_TRUE(bit_equal(back, m));
  }
}

TEST(Wire, ErrorTaxonomy) {
  EXPECT_THROW(decode({}), TruncatedFrameError);
  auto frame = encode(PoseMessage{});
  EXPECT_THROW(decode(std::span(frame).first(30)), TruncatedFrameError);

  auto bad_entity = frame;
  bad_entity[5] = 9;
  EXPECT_THROW(decode(bad_entity), UnknownEntityError);

  auto nan_pos = frame;
  set_float(nan_pos, 32, std::numeric_limits<float>::quiet_NaN());
  try {
    decode(nan_pos);
    FAIL() << "expected NonFiniteValueError";
  } catch (const NonFiniteValueError& e) {
    EXPECT_EQ(e.field(), "position.y");
  }
  auto inf_rot = frame;
  set_float(inf_rot, 44, std::numeric_limits<float>::infinity());
  EXPECT_THROW(decode(inf_rot), NonFiniteValueError);

  auto bad_version = frame;
  bad_version[4] = 2;
  EXPECT_THROW(decode(bad_version), MalformedFrameError);
  auto bad_length = frame;
  bad_length[0] = 40;
  EXPECT_THROW(decode(bad_length), MalformedFrameError);
  auto reserved = frame;
  reserved[6] = 1;
  EXPECT_THROW(decode(reserved), MalformedFrameError);
  auto trailing = frame;
  trailing.push_back(0);
  EXPECT_THROW(decode(trailing), MalformedFrameError);
}

TEST(Wire, JsonErrors) {
  EXPECT_THROW(message_from_json_text(""), TruncatedFrameError);
  EXPECT_THROW(message_from_json_text("{"), MalformedFrameError);
  const std::string ok = R"({"seq":1,"sender":2,"entity":"viewer","t_us":3,"p":[0,1,2],"q":[1,0,0,0]})";
  EXPECT_NO_THROW(message_from_json_text(ok));
  EXPECT_THROW(message_from_json_text(R"({"seq":1,"sender":2,"entity":"viewer","t_us":3,"q":[1,0,0,0]})"),
               TruncatedFrameError);
  EXPECT_THROW(message_from_json_text(R"({"seq":1,"sender":2,"entity":"ghost","t_us":3,"p":[0,1,2],"q":[1,0,0,0]})"),
               UnknownEntityError);
  EXPECT_THROW(message_from_json_text(R"({"seq":1,"sender":2,"entity":"viewer","t_us":3,"p":[0,null,2],"q":[1,0,0,0]})"),
               NonFiniteValueError);
  EXPECT_THROW(message_from_json_text(R"({"seq":1,"sender":2,"entity":"viewer","t_us":3,"p":[0,1e300,2],"q":[1,0,0,0]})"),
               NonFiniteValueError);
  EXPECT_THROW(message_from_json_text(R"({"seq":1,"sender":2,"entity":"viewer","t_us":3,"p":[0,1],"q":[1,0,0,0]})"),
               MalformedFrameError);
}

TEST(Wire, ToPoseValidatesQuaternion) {
  PoseMessage m;
  m.orientation = {0.5f, 0.0f, 0.0f, 0.0f};
  EXPECT_THROW(to_pose(m), PoseValidityError);
  m.orientation = {0.70710677f, 0.0f, 0.70710677f, 0.0f};
  EXPECT_NEAR(to_pose(m).orientation.norm(), 1.0, 1e-15);
}

TEST(Wire, Handshake) {
  const Handshake h{7, 1, 123456789};
  const Handshake back = parse_handshake(handshake_line(h));
  EXPECT_EQ(back.sender, 7u);
  EXPECT_EQ(back.clock_us, 123456789);
  EXPECT_THROW(parse_handshake(R"({"proto":"other","version":1,"sender":1,"clock_us":0})"),
               MalformedFrameError);
  EXPECT_THROW(parse_handshake(R"({"proto":"mirrorcast-pose","version":2,"sender":1,"clock_us":0})"),
               MalformedFrameError);
  EXPECT_THROW(parse_handshake(R"({"proto":"mirrorcast-pose","version":1,"sender":1,"clock_us":0,"units":{"position":"mm"}})"),
               MalformedFrameError);
}

// -- smoothing ----------------------------------------------------------------

TEST(Smoothing, ZeroTauIsPassthrough) {
  oracle::Rng rng(3);
  SmootherState s(0.0);
  for (int i = 0; i < 100; ++i) {
    const Pose raw = make_pose(EntityId::viewer, Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), 1), i * 11111,
                               rng.rotation());
    auto r = smooth(s, raw);
    ASSERT_TRUE(r.pose);
    EXPECT_EQ(r.pose->position, raw.position);
    EXPECT_TRUE(r.pose->orientation.coeffs() == raw.orientation.coeffs());
    s = r.state;
  }
}

TEST(Smoothing, TauRange) {
  EXPECT_THROW(SmootherState(-0.01), ConfigError);
  EXPECT_THROW(SmootherState(0.6), ConfigError);
  EXPECT_NO_THROW(SmootherState(0.5));
}

TEST(Smoothing, StepResponseMatchesExponential) {
  const double tau = 0.05;
  SmootherState s(tau);
  s = smooth(s, head_at(0.0, 0)).state;
  const Timestamp period = 1'000'000 / 90;
  double y = 0.0;
  for (int k = 1; k <= 45; ++k) {
    auto r = smooth(s, head_at(1.0, k * period));
    s = r.state;
    y = r.pose->position.x();
    EXPECT_EQ(r.pose->timestamp_us, k * period);
    EXPECT_NEAR(y, 1.0 - std::exp(-1e-6 * k * period / tau), 1e-12);
  }
  EXPECT_NEAR(y, 1.0, 1e-3);
}

TEST(Smoothing, ConstantInputConverges) {
  const double tau = 0.03;
  SmootherState s(tau);
  s = smooth(s, head_at(-2.0, 0)).state;
  const Timestamp period = 1'000'000 / 90;
  Timestamp t = 0;
  // Held at 1 m; after 5 tau it is within exp(-5) of the jump, and it
  // keeps shrinking geometrically toward 1e-6.
  double y = 0.0;
  while (t < static_cast<Timestamp>(20 * tau * 1e6)) {
    t += period;
    auto r = smooth(s, head_at(1.0, t));
    s = r.state;
    y = r.pose->position.x();
    if (t >= static_cast<Timestamp>(5 * tau * 1e6)) {
      EXPECT_LE(std::abs(y - 1.0), 3.0 * std::exp(-1e-6 * t / tau) + 1e-12);
    }
  }
  EXPECT_LT(std::abs(y - 1.0), 1e-6 * 3.0);
  // A filter started on constant input is exact from the first sample.
  SmootherState fresh(tau);
  for (int k = 0; k < 10; ++k) {
    auto r = smooth(fresh, head_at(0.25, k * period));
    fresh = r.state;
    EXPECT_EQ(r.pose->position.x(), 0.25);
  }
}

TEST(Smoothing, NoisyInputVarianceReduced) {
  std::mt19937_64 engine(4);
  std::normal_distribution<double> noise(0.0, 0.002);
  SmootherState s(kDefaultSmoothingTau);
  std::vector<double> in, out;
  for (int k = 0; k < 5000; ++k) {
    const double x = noise(engine);
    auto r = smooth(s, head_at(x, k * 11111));
    s = r.state;
    in.push_back(x);
    out.push_back(r.pose->position.x());
  }
  auto variance = [](const std::vector<double>& v) {
    double mean = 0;
    for (double x : v) mean += x;
    mean /= v.size();
    double acc = 0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return acc / (v.size() - 1);
  };
  EXPECT_LT(variance(out), variance(in));
  EXPECT_LT(variance(out), 0.5 * variance(in));
}

TEST(Smoothing, OutOfOrderDroppedAndCounted) {
  PoseSmoother smoother(0.03);
  ASSERT_TRUE(smoother.push(head_at(0, 1000)));
  EXPECT_FALSE(smoother.push(head_at(1, 500)));
  EXPECT_EQ(smoother.dropped(), 1u);
  EXPECT_EQ(smoother.state(EntityId::player_head).timestamp_us, 1000);
  ASSERT_TRUE(smoother.push(head_at(1, 2000)));
  smoother.reset(EntityId::player_head);
  EXPECT_FALSE(smoother.state(EntityId::player_head).initialized);
  EXPECT_EQ(smoother.push(head_at(5, 3000))->position.x(), 5.0);
}

TEST(Smoothing, OrientationUnsmoothed) {
  PoseSmoother smoother(0.03);
  smoother.push(head_at(0, 0));
  Pose turned = head_at(0, 11111);
  turned.orientation = Quat(Eigen::AngleAxisd(1.0, Vec3::UnitY()));
  EXPECT_TRUE(smoother.push(turned)->orientation.coeffs() == turned.orientation.coeffs());
}

// -- sampling -----------------------------------------------------------------

TEST(Sampling, ExactAtSamplesAndLinearBetween) {
  PoseHistory h;
  h.add(make_pose(EntityId::viewer, Vec3(0, 0, 0), 0));
  h.add(make_pose(EntityId::viewer, Vec3(2, 0, 0), 100'000));
  EXPECT_EQ(h.sample(EntityId::viewer, 0, kDefaultStalenessUs)->position, Vec3(0, 0, 0));
  EXPECT_EQ(h.sample(EntityId::viewer, 100'000, kDefaultStalenessUs)->position, Vec3(2, 0, 0));
  EXPECT_TRUE(h.sample(EntityId::viewer, 50'000, kDefaultStalenessUs)->position.isApprox(Vec3(1, 0, 0)));
}

TEST(Sampling, SlerpMidpoint) {
  const Pose a = make_pose(EntityId::viewer, Vec3::Zero(), 0);
  const Pose b = make_pose(EntityId::viewer, Vec3::Zero(), 1000,
                           Quat(Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitY())));
  const Quat mid = interpolate(a, b, 500).orientation;
  const Eigen::Matrix3d expected = oracle::rodrigues(Vec3::UnitY(), std::numbers::pi / 4);
  EXPECT_LT((mid.toRotationMatrix() - expected).cwiseAbs().maxCoeff(), 1e-9);
  oracle::Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const Pose p = make_pose(EntityId::viewer, Vec3::Zero(), 0, rng.rotation());
    const Pose q = make_pose(EntityId::viewer, Vec3::Zero(), 1000, rng.rotation());
    EXPECT_NEAR(interpolate(p, q, rng.integer(1, 999)).orientation.norm(), 1.0, 1e-12);
  }
}

TEST(Sampling, StaleEntitiesAreListed) {
  PoseHistory h;
  h.add(make_pose(EntityId::viewer, Vec3::Zero(), 0));
  h.add(make_pose(EntityId::player_head, Vec3::Zero(), 0));
  h.add(make_pose(EntityId::viewer, Vec3::Zero(), 300'000));
  // Held within the window, never extrapolated.
  EXPECT_EQ(h.sample(EntityId::viewer, 450'000, kDefaultStalenessUs)->position, Vec3::Zero());
  try {
    h.sample_at(300'000);
    FAIL() << "expected StaleEntityError";
  } catch (const StaleEntityError& e) {
    ASSERT_EQ(e.entities().size(), 1u);
    EXPECT_EQ(e.entities()[0], EntityId::player_head);
  }
  EXPECT_NO_THROW(h.sample_at(150'000));
}

TEST(LatestStore, BatchPublishIsAtomic) {
  LatestPoseStore store;
  std::atomic<bool> stop{false};
  std::atomic<int> torn{0};
  std::thread reader([&] {
    while (!stop) {
      const auto snap = store.snapshot();
      const auto v = snap->history.latest(EntityId::viewer);
      const auto h = snap->history.latest(EntityId::player_head);
      if (v.has_value() != h.has_value() || (v && v->timestamp_us != h->timestamp_us)) ++torn;
    }
  });
  for (Timestamp t = 1; t <= 20000; ++t) {
    const std::array<Pose, 2> batch = {make_pose(EntityId::viewer, Vec3::Zero(), t),
                                       make_pose(EntityId::player_head, Vec3::Zero(), t)};
    store.publish(batch);
  }
  stop = true;
  reader.join();
  EXPECT_EQ(torn.load(), 0);
  EXPECT_EQ(store.snapshot()->version, 20000u);
  EXPECT_LE(store.snapshot()->history.track(EntityId::viewer).size(), LatestPoseStore::kHistoryCapacity);
}

TEST(LatestStore, FreshLatestDropsOldEntities) {
  LatestPoseStore store;
  store.publish(make_pose(EntityId::viewer, Vec3::Zero(), 0));
  store.publish(make_pose(EntityId::player_head, Vec3::Zero(), 250'000));
  const auto set = LatestPoseStore::fresh_latest(*store.snapshot(), 300'000, kDefaultStalenessUs);
  EXPECT_FALSE(set.has(EntityId::viewer));
  EXPECT_TRUE(set.has(EntityId::player_head));
}

// -- traces -------------------------------------------------------------------

TEST(Trace, RecordWriteReadRoundTrip) {
  oracle::Rng rng(6);
  TraceRecorder rec(TraceHeader{0.531, 0.299, BodyModel{}, 1'700'000'000'000'000});
  for (int i = 0; i < 10000; ++i) {
    PoseMessage m = random_message(rng);
    m.timestamp_us = rng.integer(0, 1'000'000'000);
    rec.record(m);
  }
  const PoseTrace trace = rec.finish();
  ASSERT_TRUE(trace.is_sorted());
  std::stringstream buffer(trace_to_string(trace));
  const PoseTrace back = read_trace(buffer);
  ASSERT_EQ(back.messages.size(), trace.messages.size());
  for (std::size_t i = 0; i < trace.messages.size(); ++i) {
    ASSERT_TRUE(bit_equal(back.messages[i], trace.messages[i]));
  }
  EXPECT_EQ(back.header.start_epoch_us, 1'700'000'000'000'000);
  EXPECT_EQ(trace_to_string(back), trace_to_string(trace));
}

TEST(Trace, MalformedFilesRejected) {
  std::stringstream empty("");
  EXPECT_THROW(read_trace(empty), TraceError);
  std::stringstream wrong_format(R"({"format":"other"})" "\n");
  EXPECT_THROW(read_trace(wrong_format), TraceError);

  PoseTrace t;
  t.messages.push_back(PoseMessage{});
  std::string text = trace_to_string(t) + "{\"seq\":1}\n";
  std::stringstream bad_line(text);
  try {
    read_trace(bad_line);
    FAIL() << "expected TraceError";
  } catch (const TraceError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }

  PoseTrace unsorted;
  unsorted.messages.resize(2);
  unsorted.messages[0].timestamp_us = 10;
  std::stringstream out_of_order(trace_to_string(unsorted));
  EXPECT_THROW(read_trace(out_of_order), TraceError);
}

TEST(Trace, HeaderMismatchListsDiffs) {
  SessionConfig config;
  TraceHeader h = TraceHeader::from_config(config);
  EXPECT_NO_THROW(check_header(h, config));
  h.mirror_width = 1.107;
  h.body.head_radius = 0.1;
  try {
    check_header(h, config);
    FAIL() << "expected HeaderMismatchError";
  } catch (const HeaderMismatchError& e) {
    EXPECT_EQ(e.diffs().size(), 2u);
    EXPECT_NE(std::string(e.what()).find("mirror.width"), std::string::npos);
  }
}

TEST(Trace, ReplayPreservesSequenceAndTiming) {
  PoseTrace trace;
  oracle::Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    PoseMessage m = random_message(rng);
    m.timestamp_us = i * 10'000;
    trace.messages.push_back(m);
  }
  using clock = std::chrono::steady_clock;
  std::vector<PoseMessage> got;
  std::vector<clock::time_point> when;
  replay(trace, 1.0, [&](const PoseMessage& m) {
    got.push_back(m);
    when.push_back(clock::now());
  });
  ASSERT_EQ(got.size(), trace.messages.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_TRUE(bit_equal(got[i], trace.messages[i]));
    if (i == 0) continue;
    const double delay_ms = std::chrono::duration<double, std::milli>(when[i] - when[i - 1]).count();
    EXPECT_NEAR(delay_ms, 10.0, 2.0);
  }

  const auto t2 = clock::now();
  replay(trace, 2.0, [](const PoseMessage&) {});
  const double total_ms = std::chrono::duration<double, std::milli>(clock::now() - t2).count();
  EXPECT_NEAR(total_ms, 95.0, 2.0);
  EXPECT_THROW(replay(trace, 0.0, [](const PoseMessage&) {}), TraceError);
}
