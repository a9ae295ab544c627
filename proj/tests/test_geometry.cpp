#include <gtest/gtest.h>

#include <random>

#include <Eigen/Geometry>

#include "pedit/fixture.hpp"
#include "pedit/geometry.hpp"

using namespace pedit;

namespace {

CameraView simple_camera() {
  CameraView cam;
  cam.intrinsics << 100, 0, 320, 0, 100, 240, 0, 0, 1;
  cam.width = 640;
  cam.height = 480;
  return cam;
}

CameraView random_camera(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CameraView cam = simple_camera();
  const Eigen::Quaterniond q = Eigen::Quaterniond(u(rng), u(rng), u(rng), u(rng)).normalized();
  cam.rotation = q.toRotationMatrix();
  cam.translation = Eigen::Vector3d(u(rng), u(rng), u(rng)) * 5.0;
  return cam;
}

}  // namespace

TEST(Projection, OpticalAxisHitsPrincipalPoint) {
  const auto p = project_point(simple_camera(), {0, 0, 5});
  ASSERT_TRUE(p);
  EXPECT_DOUBLE_EQ(p->u, 320.0);
  EXPECT_DOUBLE_EQ(p->v, 240.0);
  EXPECT_DOUBLE_EQ(p->depth, 5.0);
}

TEST(Projection, LateralOffsetScalesByFocalOverDepth) {
  const auto p = project_point(simple_camera(), {1, 0, 5});
  ASSERT_TRUE(p);
  EXPECT_DOUBLE_EQ(p->u, 340.0);
  EXPECT_DOUBLE_EQ(p->v, 240.0);
}

TEST(Projection, BehindCameraIsNotProjectable) {
  EXPECT_FALSE(project_point(simple_camera(), {0, 0, -1}));
  EXPECT_FALSE(project_point(simple_camera(), {0, 0, kMinDepth}));
}

TEST(Projection, UnprojectInvertsProjectForRandomRigs) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    const CameraView cam = random_camera(rng);
    const Eigen::Vector3d pc(u(rng), u(rng), 0.5 + std::abs(u(rng)) * 5);
    const Eigen::Vector3d pw = to_world(cam, pc);
    const auto p = project_point(cam, pw);
    ASSERT_TRUE(p);
    EXPECT_LT((unproject(cam, p->u, p->v, p->depth) - pw).norm(), 1e-9);
    ++checked;
  }
  EXPECT_EQ(checked, 2000);
}

TEST(Projection, HomogeneousScaleInvariance) {
  const CameraView cam = simple_camera();
  const Eigen::Vector3d pc(0.7, -0.3, 4.0);
  const auto a = project_camera_point(cam, pc);
  for (double lambda : {0.25, 1.0, 3.0, 100.0}) {
    const auto b = project_camera_point(cam, lambda * pc);
    ASSERT_TRUE(b);
    EXPECT_NEAR(a->u, b->u, 1e-9);
    EXPECT_NEAR(a->v, b->v, 1e-9);
  }
}

TEST(BoxProjection, CentredBoxMatchesCornerBruteForce) {
  CameraView cam = simple_camera();
  Box3D box;
  box.center = {0, 0, 10};
  box.size = {1, 1, 2};
  // Box "up" is world z; this camera looks along world z, so the box is
  // seen end-on. Both routes must agree regardless.
  const ViewBox2D vb = project_box3d(cam, box);
  double x0 = 1e9, x1 = -1e9, y0 = 1e9, y1 = -1e9;
  for (int sx : {-1, 1}) {
    for (int sy : {-1, 1}) {
      for (int sz : {-1, 1}) {
        const double X = 0.5 * sx, Y = 0.5 * sy, Z = 10 + sz;
        const double u = 100 * X / Z + 320, v = 100 * Y / Z + 240;
        x0 = std::min(x0, u);
        x1 = std::max(x1, u);
        y0 = std::min(y0, v);
        y1 = std::max(y1, v);
      }
    }
  }
  EXPECT_EQ(vb.visibility, Visibility::Visible);
  EXPECT_NEAR(vb.rect.x_min, x0, 1e-12);
  EXPECT_NEAR(vb.rect.x_max, x1, 1e-12);
  EXPECT_NEAR(vb.rect.y_min, y0, 1e-12);
  EXPECT_NEAR(vb.rect.y_max, y1, 1e-12);
  EXPECT_NEAR(vb.rect.cx(), 320.0, 1e-12);
  EXPECT_NEAR(vb.rect.x_max - 320.0, 100 * 0.5 / 9.0, 1e-12);
}

TEST(BoxProjection, BoxBehindCameraIsOutOfView) {
  Box3D box;
  box.center = {0, 0, -10};
  EXPECT_EQ(project_box3d(simple_camera(), box).visibility, Visibility::OutOfView);
}

TEST(BoxProjection, BoxStraddlingLeftEdgeIsTruncatedAndClipped) {
  Box3D box;
  box.center = {-32.0, 0, 10};
  box.size = {2, 2, 2};
  const ViewBox2D vb = project_box3d(simple_camera(), box);
  EXPECT_EQ(vb.visibility, Visibility::Truncated);
  EXPECT_EQ(vb.rect.x_min, 0.0);
  // Unclipped right edge: nearest corner at z=9, x=-31.
  EXPECT_NEAR(vb.rect.x_max, 100 * -31.0 / 11.0 + 320, 1e-9);
}

TEST(BoxProjection, CornersFollowYaw) {
  Box3D box;
  box.center = {1, 2, 3};
  box.size = {2, 4, 6};
  box.yaw = std::numbers::pi / 2;
  const auto c = box_corners(box);
  // l (=4) now runs along world y, w (=2) along world -x.
  EXPECT_NEAR(c[1].y() - c[0].y(), 4.0, 1e-12);
  EXPECT_NEAR(c[2].x() - c[0].x(), -2.0, 1e-12);
  EXPECT_NEAR(c[4].z() - c[0].z(), 6.0, 1e-12);
}

TEST(SkeletonProjection, BehindAndPrincipalPointCases) {
  const CameraView cam = simple_camera();
  const auto behind = project_skeleton(cam, Skeleton3D(17, Eigen::Vector3d(0, 0, -2)));
  for (const auto& j : behind.joints) EXPECT_FALSE(j.valid);
  const auto single = project_skeleton(cam, Skeleton3D{Eigen::Vector3d(0, 0, 3)});
  ASSERT_EQ(single.joints.size(), 1u);
  EXPECT_TRUE(single.joints[0].valid);
  EXPECT_DOUBLE_EQ(single.joints[0].u, 320.0);
  EXPECT_DOUBLE_EQ(single.joints[0].v, 240.0);
}

TEST(SkeletonProjection, FixtureJointsStayInsideInflatedBox) {
  FixtureSpec spec;
  spec.frame_count = 16;
  PedestrianSpec p;
  p.start = {5.0, -1.5};
  p.velocity = {0.3, 1.4};
  spec.pedestrians.push_back(p);
  const Fixture fx = make_fixture(spec);
  int checked = 0;
  for (const auto& tf : fx.scene.tracks[0].frames) {
    for (ViewId v : kCanonicalViews) {
      const auto& cam = fx.scene.view(v);
      const ViewBox2D vb = project_box3d(cam, tf.box);
      if (vb.visibility != Visibility::Visible) continue;
      const RectF r = vb.rect;
      const double mx = 0.1 * r.width(), my = 0.1 * r.height();
      for (const auto& joint : *tf.skeleton) {
        const auto q = project_point(cam, joint);
        ASSERT_TRUE(q);
        EXPECT_GE(q->u, r.x_min - mx);
        EXPECT_LE(q->u, r.x_max + mx);
        EXPECT_GE(q->v, r.y_min - my);
        EXPECT_LE(q->v, r.y_max + my);
        ++checked;
      }
    }
  }
  EXPECT_GE(checked, 17 * 16);
}

TEST(Bev, DropsVerticalCoordinate) {
  Box3D b;
  b.center = {3, -2, 1.1};
  EXPECT_EQ(bev_center(b), Eigen::Vector2d(3, -2));
  b.center = Eigen::Vector3d::Zero();
  EXPECT_EQ(bev_center(b), Eigen::Vector2d(0, 0));
  Box3D c;
  c.center = {6, 2, 0.3};
  b.center = {3, -2, 1.1};
  EXPECT_DOUBLE_EQ(bev_distance(bev_center(b), bev_center(c)), 5.0);
}

TEST(Extrinsics, RoundTripRecoversWorldPoints) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 500; ++i) {
    const CameraView cam = random_camera(rng);
    const Eigen::Vector3d p(u(rng), u(rng), u(rng));
    EXPECT_LT((to_world(cam, to_camera(cam, p)) - p).norm(), 1e-9);
  }
}

TEST(Extrinsics, RigCamerasAreProperRotations) {
  for (double yaw : {0.0, 1.0, -2.5}) {
    const Eigen::Matrix3d r = level_camera_rotation(yaw);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    EXPECT_LT((r.transpose() * r - Eigen::Matrix3d::Identity()).norm(), 1e-12);
  }
}
