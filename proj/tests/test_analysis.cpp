#include "mirrorcast/analysis.hpp"

#include "mirrorcast/oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace mirrorcast;

namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

SilhouettePolygon square(double x0, double y0, double x1, double y1) {
  SilhouettePolygon p;
  p.outline = {Vec2(x0, y0), Vec2(x1, y0), Vec2(x1, y1), Vec2(x0, y1)};
  return p;
}

SilhouettePolygon ellipse(const Vec2& c, double a, double b, int n = 64) {
  SilhouettePolygon p;
  for (int k = 0; k < n; ++k) {
    const double t = 2 * std::numbers::pi * k / n;
    p.outline.emplace_back(c.x() + a * std::cos(t), c.y() + b * std::sin(t));
  }
  return p;
}

}  // namespace

TEST(PanelDims, FromDiagonal) {
  const PanelDims d24 = panel_from_diagonal(24);
  EXPECT_NEAR(d24.width, 24 * 0.0254 * 16 / std::sqrt(337.0), 1e-15);
  EXPECT_NEAR(d24.width, 0.531, 5e-4);
  EXPECT_NEAR(d24.height, 0.299, 5e-4);
  EXPECT_NEAR(std::hypot(d24.width, d24.height), 24 * 0.0254, 1e-15);
}

TEST(Fov, CenteredAtHalfWidthIsNinety) {
  const auto r = fov_report(Vec3(0.5, 0.3, 0.5), {1.0, 0.6});
  EXPECT_NEAR(r.horizontal_deg, 90.0, 1e-12);
  EXPECT_NEAR(r.vertical_deg, 2 * std::atan(0.3 / 0.5) * kDeg, 1e-12);
  EXPECT_DOUBLE_EQ(r.viewer_depth, 0.5);
}

TEST(Fov, ScreenSizesAtHalfMeter) {
  const PanelDims d24 = panel_from_diagonal(24), d50 = panel_from_diagonal(50);
  const auto r24 = fov_report(Vec3(d24.width / 2, d24.height / 2, 0.5), d24);
  const auto r50 = fov_report(Vec3(d50.width / 2, d50.height / 2, 0.5), d50);
  EXPECT_NEAR(r24.horizontal_deg, 2 * std::atan(d24.width / 2 / 0.5) * kDeg, 1e-12);
  EXPECT_NEAR(r24.horizontal_deg, 55.97, 0.01);
  EXPECT_NEAR(r50.horizontal_deg, 2 * std::atan(d50.width / 2 / 0.5) * kDeg, 1e-12);
  EXPECT_NEAR(r50.horizontal_deg, 95.81, 0.01);
  EXPECT_GT(r50.horizontal_deg, r24.horizontal_deg);
  EXPECT_NEAR(r24.diagonal_inches, 24.0, 1e-9);
}

TEST(Fov, OffCenterUsesEdgeAngles) {
  oracle::Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const PanelDims dims{rng.uniform(0.3, 2), rng.uniform(0.2, 1.2)};
    const Vec3 eye(rng.uniform(-1, 3), rng.uniform(-1, 2), rng.uniform(0.1, 3));
    const auto r = fov_report(eye, dims);
    // Angle between the rays to the two vertical edges, in the eye's horizontal plane.
    const Eigen::Vector2d to_left(-eye.x(), -eye.z()), to_right(dims.width - eye.x(), -eye.z());
    const double expected =
        std::acos(to_left.dot(to_right) / (to_left.norm() * to_right.norm())) * kDeg;
    EXPECT_NEAR(r.horizontal_deg, expected, 1e-9);
    EXPECT_GT(r.horizontal_deg, 0.0);
    EXPECT_LT(r.horizontal_deg, 180.0);
    EXPECT_GT(r.solid_angle_sr, 0.0);
    EXPECT_LT(r.solid_angle_sr, 2 * std::numbers::pi);
  }
}

TEST(Fov, SolidAngleMatchesQuadrature) {
  oracle::Rng rng(10);
  for (int i = 0; i < 10; ++i) {
    const PanelDims dims{rng.uniform(0.3, 1.5), rng.uniform(0.2, 1.0)};
    const Vec3 eye(rng.uniform(-0.5, 2), rng.uniform(-0.5, 1.5), rng.uniform(0.3, 2));
    const double expected = oracle::solid_angle_quadrature(-eye.x(), dims.width - eye.x(), -eye.y(),
                                                           dims.height - eye.y(), eye.z(), 1000);
    EXPECT_NEAR(fov_report(eye, dims).solid_angle_sr, expected, 1e-5 * expected);
  }
}

TEST(Fov, MonotoneInSizeAndDepth) {
  double prev = 0.0;
  for (int k = 0; k < 20; ++k) {
    const PanelDims d = panel_from_diagonal(20.0 + 4.0 * k);
    const double fov = fov_report(Vec3(d.width / 2, d.height / 2, 0.5), d).horizontal_deg;
    EXPECT_GT(fov, prev);
    prev = fov;
  }
  const PanelDims d = panel_from_diagonal(24);
  prev = 180.0;
  for (double z = 0.1; z < 3.0; z += 0.1) {
    const double fov = fov_report(Vec3(0.1, 0.1, z), d).horizontal_deg;
    EXPECT_LT(fov, prev);
    prev = fov;
  }
}

TEST(Fov, Errors) {
  EXPECT_THROW(fov_report(Vec3(0, 0, 0), {1, 1}), BehindMirrorError);
  EXPECT_THROW(fov_report(Vec3(0, 0, 1), {0, 1}), ConfigError);
}

TEST(Coverage, Examples) {
  const auto centered = silhouette_coverage(ellipse(Vec2(0.5, 0.5), 0.25, 0.25));
  EXPECT_NEAR(centered.coverage, std::numbers::pi / 16, 0.01 * std::numbers::pi / 16);
  EXPECT_NEAR(centered.overflow, 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(silhouette_coverage(square(0, 0, 1, 1)).coverage, 1.0);
  const auto off = silhouette_coverage(square(1.1, 1.1, 1.4, 1.4));
  EXPECT_DOUBLE_EQ(off.coverage, 0.0);
  EXPECT_NEAR(off.overflow, 0.09, 1e-12);
  EXPECT_DOUBLE_EQ(silhouette_coverage(SilhouettePolygon{}).coverage, 0.0);
}

TEST(Coverage, HalfOffscreenSquare) {
  const auto c = silhouette_coverage(square(-0.2, 0.2, 0.2, 0.6));
  EXPECT_NEAR(c.coverage, 0.08, 1e-12);
  EXPECT_NEAR(c.overflow, 0.08, 1e-12);
}

TEST(Coverage, AccountsForTotalArea) {
  oracle::Rng rng(13);
  for (int i = 0; i < 2000; ++i) {
    const auto poly = ellipse(Vec2(rng.uniform(-0.5, 1.5), rng.uniform(-0.5, 1.5)), rng.uniform(0.01, 0.9),
                              rng.uniform(0.01, 0.9));
    const auto c = silhouette_coverage(poly);
    EXPECT_GE(c.coverage, 0.0);
    EXPECT_LE(c.coverage, 1.0);
    EXPECT_GE(c.overflow, 0.0);
    EXPECT_NEAR(c.coverage + c.overflow, std::abs(signed_area(poly.outline)), 1e-9);
  }
}

TEST(Teleport, Examples) {
  const Pose a = make_pose(EntityId::player_head, Vec3(0, 1.7, 1));
  const auto flag = detect_teleport(a, make_pose(EntityId::player_head, Vec3(5, 1.7, 1)), 0.011);
  ASSERT_TRUE(flag.has_value());
  EXPECT_EQ(flag->kind, EventKind::teleport);
  EXPECT_NEAR(flag->magnitude, 5.0, 1e-15);
  EXPECT_FALSE(detect_teleport(a, make_pose(EntityId::player_head, Vec3(1.4 * 0.011, 1.7, 1)), 0.011));
  EXPECT_FALSE(detect_teleport(a, make_pose(EntityId::player_head, Vec3(5, 1.7, 1)), 0.0));
}

TEST(Teleport, FlagCountNonIncreasingInThreshold) {
  oracle::Rng rng(14);
  std::vector<Pose> trace;
  Vec3 p(0, 1.7, 1);
  for (int i = 0; i < 2000; ++i) {
    p.x() += rng.uniform(-0.02, 0.02);
    if (rng.integer(0, 99) == 0) p.x() += rng.uniform(-6, 6);
    trace.push_back(make_pose(EntityId::player_head, p));
  }
  const double dt = 1.0 / 90.0;
  std::size_t prev = trace.size();
  for (double threshold = 0.5; threshold < 600; threshold *= 1.5) {
    std::size_t count = 0;
    for (std::size_t i = 1; i < trace.size(); ++i) {
      if (auto f = detect_teleport(trace[i - 1], trace[i], dt, threshold)) {
        ++count;
        EXPECT_GE(f->magnitude / dt, threshold);
      }
    }
    EXPECT_LE(count, prev);
    prev = count;
  }
}
