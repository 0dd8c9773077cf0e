#include "mirrorcast/analysis.hpp"
#include "mirrorcast/frustum.hpp"

#include "mirrorcast/oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace mirrorcast;

namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

MirrorFrame random_frame(oracle::Rng& rng) {
  return mirror_frame_from_pose(
      make_pose(EntityId::mirror, Vec3(rng.uniform(-2, 2), rng.uniform(0, 2), rng.uniform(-2, 2)),
                0, rng.rotation()),
      MountOffset{}, rng.uniform(0.3, 2.5), rng.uniform(0.2, 1.5));
}

Vec3 random_viewer_local(oracle::Rng& rng, const MirrorFrame& f, double spread = 1.0) {
  return Vec3(f.width * rng.uniform(0.5 - spread, 0.5 + spread),
              f.height * rng.uniform(0.5 - spread, 0.5 + spread), rng.uniform(0.2, 3.0));
}

double hfov_of(const Mat4& p) {
  // Near-plane extents recovered from a glFrustum matrix.
  const double l = (p(0, 2) - 1.0) / p(0, 0), r = (p(0, 2) + 1.0) / p(0, 0);
  return (std::atan(r) - std::atan(l)) * kDeg;
}

}  // namespace

TEST(MirroredView, AxialViewerSeesGlassAtItsDepth) {
  MirrorFrame f;
  f.width = 0.8;
  f.height = 0.6;
  const Mat4 view = mirrored_view(make_pose(EntityId::viewer, Vec3(0.4, 0.3, 1.0)), f);
  const Vec4 cam = view * Vec4(0.1, 0.5, 0.0, 1.0);
  EXPECT_NEAR(-cam.z(), 1.0, 1e-15);
  EXPECT_NEAR(view.block(0, 0, 3, 3).determinant(), -1.0, 1e-12);
}

TEST(MirroredView, DoubleReflectionGivesPlainCamera) {
  oracle::Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const MirrorFrame f = random_frame(rng);
    const Vec3 eye = from_mirror_frame(random_viewer_local(rng, f), f);
    const Mat4 twice = mirrored_view(make_pose(EntityId::viewer, eye), f) * reflection_matrix(f);
    EXPECT_LT((twice - plain_view(eye, f)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(MirroredView, EquivalentToPlainCameraOnReflectedPoints) {
  oracle::Rng rng(2);
  const MirrorFrame f = random_frame(rng);
  const Vec3 eye_local = random_viewer_local(rng, f, 0.1);
  const Vec3 eye = from_mirror_frame(eye_local, f);
  const Mat4 proj = offaxis_projection(eye_local, f, 0.05, 100.0);
  const Mat4 mirrored = mirrored_view(make_pose(EntityId::viewer, eye), f);
  const Mat4 plain = plain_view(eye, f);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 q = from_mirror_frame(
        Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0.05, 20.0)), f);
    const Vec3 a = project_to_ndc(proj, mirrored, q);
    const Vec3 b = project_to_ndc(proj, plain, oracle::reflect_across_plane(q, f.origin, f.normal()));
    worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(MirroredView, RejectsViewerBehindGlass) {
  EXPECT_THROW(mirrored_view(make_pose(EntityId::viewer, Vec3(0, 0, -0.1)), MirrorFrame{}),
               BehindMirrorError);
}

TEST(OffaxisProjection, CenteredAtHalfWidthIsNinetyDegrees) {
  MirrorFrame f;
  f.width = 1.2;
  f.height = 0.7;
  EXPECT_NEAR(hfov_of(offaxis_projection(Vec3(0.6, 0.35, 0.6), f, 0.05, 100)), 90.0, 1e-12);
}

TEST(OffaxisProjection, TwentyFourInchPanel) {
  const PanelDims dims = panel_from_diagonal(24);
  MirrorFrame f;
  f.width = dims.width;
  f.height = dims.height;
  const double expected = 2.0 * std::atan(0.5 * dims.width / 0.5) * kDeg;
  const double got = hfov_of(offaxis_projection(Vec3(dims.width / 2, dims.height / 2, 0.5), f, 0.05, 100));
  EXPECT_NEAR(got, expected, 1e-10);
  EXPECT_NEAR(got, 55.97, 0.01);
}

TEST(OffaxisProjection, CornersPinToNdcCorners) {
  oracle::Rng rng(3);
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const MirrorFrame f = random_frame(rng);
    const Vec3 eye_local = random_viewer_local(rng, f, 2.0);
    const Vec3 eye = from_mirror_frame(eye_local, f);
    const Mat4 proj = offaxis_projection(eye_local, f, 0.05, 100);
    const Mat4 views[] = {plain_view(eye, f), mirrored_view(make_pose(EntityId::viewer, eye), f)};
    for (const Mat4& view : views) {
      for (int cx = 0; cx < 2; ++cx) {
        for (int cy = 0; cy < 2; ++cy) {
          const Vec3 corner = from_mirror_frame(Vec3(cx * f.width, cy * f.height, 0), f);
          const Vec3 ndc = project_to_ndc(proj, view, corner);
          worst = std::max(worst, std::abs(ndc.x() - (2 * cx - 1)));
          worst = std::max(worst, std::abs(ndc.y() - (2 * cy - 1)));
        }
      }
    }
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(OffaxisProjection, Errors) {
  MirrorFrame f;
  EXPECT_THROW(offaxis_projection(Vec3(0.5, 0.5, 0.0), f, 0.05, 100), BehindMirrorError);
  EXPECT_THROW(offaxis_projection(Vec3(0.5, 0.5, 1.0), f, 1.0, 0.5), ConfigError);
  EXPECT_THROW(offaxis_projection(Vec3(0.5, 0.5, 1.0), f, 0.0, 1.0), ConfigError);
}

TEST(OffaxisProjection, FovGrowsWithWidthAndProximity) {
  const Vec3 eye(0.2, 0.2, 0.7);
  MirrorFrame f;
  f.height = 0.5;
  double prev = 0.0;
  for (double w = 0.5; w < 3.0; w += 0.1) {
    f.width = w;
    const double fov = hfov_of(offaxis_projection(eye, f, 0.05, 100));
    EXPECT_GT(fov, prev);
    prev = fov;
  }
  f.width = 1.0;
  prev = 0.0;
  for (double d = 3.0; d > 0.1; d -= 0.1) {
    const double fov = hfov_of(offaxis_projection(Vec3(0.2, 0.2, d), f, 0.05, 100));
    EXPECT_GT(fov, prev);
    prev = fov;
  }
}

TEST(BlitRectangle, CenteredNoOverscanIsFullTexture) {
  MirrorFrame f;
  f.width = 0.531;
  f.height = 0.299;
  const auto r = blit_rectangle(Vec3(f.width / 2, f.height / 2, 0.5), f, 1.0);
  EXPECT_DOUBLE_EQ(r.u0, 0.0);
  EXPECT_DOUBLE_EQ(r.v0, 0.0);
  EXPECT_DOUBLE_EQ(r.u1, 1.0);
  EXPECT_DOUBLE_EQ(r.v1, 1.0);
}

TEST(BlitRectangle, ViewerRightShiftsRectangleLeft) {
  MirrorFrame f;
  const auto centered = blit_rectangle(Vec3(0.5, 0.5, 1), f, 1.3);
  const auto right = blit_rectangle(Vec3(0.6, 0.5, 1), f, 1.3);
  EXPECT_LT(right.u0, centered.u0);
  EXPECT_LT(right.u1, centered.u1);
  EXPECT_DOUBLE_EQ(right.v0, centered.v0);
  EXPECT_NEAR(right.width(), 1 / 1.3, 1e-15);
}

TEST(BlitRectangle, InsufficientOverscan) {
  MirrorFrame f;
  EXPECT_THROW(blit_rectangle(Vec3(0.6, 0.5, 1), f, 1.0), InsufficientOverscanError);
  EXPECT_THROW(blit_rectangle(Vec3(0.9, 0.5, 1), f, 1.3), InsufficientOverscanError);
  EXPECT_THROW(blit_rectangle(Vec3(0.5, 0.5, 1), f, 0.9), ConfigError);
  EXPECT_NO_THROW(blit_rectangle(Vec3(0.65, 0.35, 1), f, 1.3));
}

TEST(BlitRectangle, TwoPassMatchesSinglePassWithinOneTexel) {
  constexpr double kWidthPx = 1920, kHeightPx = 1080;
  const double overscan = 1.3;
  oracle::Rng rng(4);
  double worst_px = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const MirrorFrame f = random_frame(rng);
    const double slack = (overscan - 1.0) / 2.0;
    const Vec3 eye_local(f.width * rng.uniform(0.5 - slack, 0.5 + slack),
                         f.height * rng.uniform(0.5 - slack, 0.5 + slack), rng.uniform(0.2, 3));
    const RenderParams rp = render_params(from_mirror_frame(eye_local, f), f, 0.05, 100, overscan);
    for (int k = 0; k < 20; ++k) {
      const Vec3 q = from_mirror_frame(Vec3(rng.uniform(-1, 2) * f.width, rng.uniform(-1, 2) * f.height,
                                            rng.uniform(0.05, 10)),
                                       f);
      const Vec3 one = project_to_ndc(rp.projection_matrix, rp.view_matrix, q);
      const Vec3 tex = project_to_ndc(rp.texture_projection_matrix, rp.view_matrix, q);
      const double u = (0.5 * (tex.x() + 1) - rp.texture_blit.u0) / rp.texture_blit.width();
      const double v = (0.5 * (tex.y() + 1) - rp.texture_blit.v0) / rp.texture_blit.height();
      worst_px = std::max(worst_px, std::abs(u - 0.5 * (one.x() + 1)) * kWidthPx);
      worst_px = std::max(worst_px, std::abs(v - 0.5 * (one.y() + 1)) * kHeightPx);
    }
  }
  EXPECT_LT(worst_px, 1.0);
}

TEST(ObliqueClip, AxialIdentityFrameIsConstantDepthPlane) {
  MirrorFrame f;
  const Mat4 view = mirrored_view(make_pose(EntityId::viewer, Vec3(0.5, 0.5, 1.5)), f);
  const Vec4 plane = oblique_near_clip(view, f);
  EXPECT_NEAR(plane.x(), 0.0, 1e-15);
  EXPECT_NEAR(plane.y(), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(plane.z()), 1.0, 1e-15);
  // Camera-space z of every glass point is the same constant.
  EXPECT_NEAR(-plane.w() / plane.z(), (view * Vec4(0.2, 0.9, 0, 1)).z(), 1e-12);
}

TEST(ObliqueClip, ContainmentAndSides) {
  oracle::Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const MirrorFrame f = random_frame(rng);
    const Vec3 eye = from_mirror_frame(random_viewer_local(rng, f), f);
    const Mat4 view = mirrored_view(make_pose(EntityId::viewer, eye), f);
    const Vec4 plane = oblique_near_clip(view, f);
    const Vec3 g = from_mirror_frame(Vec3(rng.uniform(-1, 2), rng.uniform(-1, 2), 0), f);
    EXPECT_LT(std::abs(plane.dot(view * g.homogeneous())), 1e-12);

    const Vec3 room = from_mirror_frame(Vec3(rng.uniform(0, f.width), rng.uniform(0, f.height), 0.01), f);
    EXPECT_LT(plane.dot(view * room.homogeneous()), 0.0);
    EXPECT_NEAR(plane.dot(view * room.homogeneous()), -0.01, 1e-12);

    // The mirrored camera sits at the reflected eye; points between it and
    // the glass land on the clipped side.
    const Vec3 cam_world = oracle::reflect_across_plane(eye, f.origin, f.normal());
    const Vec3 between = 0.5 * (cam_world + g);
    EXPECT_GT(plane.dot(view * between.homogeneous()), 0.0);
  }
}

TEST(RenderParams, InvariantsHold) {
  oracle::Rng rng(6);
  for (int i = 0; i < 500; ++i) {
    const MirrorFrame f = random_frame(rng);
    const Vec3 eye = from_mirror_frame(Vec3(f.width * rng.uniform(0.4, 0.6), f.height * rng.uniform(0.4, 0.6),
                                            rng.uniform(0.2, 3)),
                                       f);
    const RenderParams rp = render_params(eye, f, 0.05, 100, 1.3);
    EXPECT_NEAR(rp.view_matrix.block(0, 0, 3, 3).determinant(), -1.0, 1e-9);
    EXPECT_TRUE(rp.view_matrix.allFinite() && rp.projection_matrix.allFinite());
    EXPECT_GT(rp.texture_blit.width(), 0.0);
    EXPECT_GE(rp.texture_blit.u0, 0.0);
    EXPECT_LE(rp.texture_blit.u1, 1.0);
  }
}

TEST(EyePosition, OffsetFollowsTrackerOrientation) {
  const Pose cap = make_pose(EntityId::viewer, Vec3(1, 1.7, 2), 0,
                             Quat(Eigen::AngleAxisd(std::numbers::pi, Vec3::UnitY())));
  // Facing +z after a half turn: the eyes are 0.10 m further along +z.
  EXPECT_LT((eye_position(cap, kDefaultEyeOffset) - Vec3(1, 1.65, 2.1)).norm(), 1e-12);
}

TEST(RenderParams, OverscanWidensForOffCenterViewers) {
  oracle::Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const MirrorFrame f = random_frame(rng);
    const Vec3 eye_local(f.width * rng.uniform(-2, 3), f.height * rng.uniform(-2, 3), rng.uniform(0.2, 3));
    const RenderParams rp = render_params(from_mirror_frame(eye_local, f), f, 0.05, 100, 1.3);
    EXPECT_GE(rp.overscan, 1.3);
    EXPECT_NEAR(rp.overscan, std::max(1.3, required_overscan(eye_local, f)), 1e-12 * rp.overscan);
    EXPECT_GE(rp.texture_blit.u0, 0.0);
    EXPECT_LE(rp.texture_blit.u1, 1.0);
    EXPECT_GE(rp.texture_blit.v0, 0.0);
    EXPECT_LE(rp.texture_blit.v1, 1.0);
    EXPECT_NEAR(rp.texture_blit.width(), 1.0 / rp.overscan, 1e-12);
    // Glass corners still land on the blit corners through the texture.
    const Vec3 corner = from_mirror_frame(Vec3(f.width, 0, 0), f);
    const Vec3 tex = project_to_ndc(rp.texture_projection_matrix, rp.view_matrix, corner);
    EXPECT_NEAR(0.5 * (tex.x() + 1), rp.texture_blit.u1, 1e-9);
    EXPECT_NEAR(0.5 * (tex.y() + 1), rp.texture_blit.v0, 1e-9);
  }
  MirrorFrame f;
  EXPECT_DOUBLE_EQ(required_overscan(Vec3(0.5, 0.5, 1), f), 1.0);
  EXPECT_DOUBLE_EQ(required_overscan(Vec3(1.5, 0.5, 1), f), 3.0);
}
