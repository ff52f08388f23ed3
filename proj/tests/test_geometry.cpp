#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "stepstone/geometry.hpp"
#include "stepstone/random.hpp"

using namespace stepstone;

namespace {

Quat random_unit_quaternion(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Quat q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  return q;
}

}  // namespace

TEST(Geometry, WrapAngleStaysInHalfOpenRange) {
  EXPECT_NEAR(wrap_angle(0.0), 0.0, 1e-15);
  EXPECT_NEAR(wrap_angle(2.0 * std::numbers::pi + 0.1), 0.1, 1e-12);
  EXPECT_NEAR(wrap_angle(-2.0 * std::numbers::pi - 0.1), -0.1, 1e-12);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double a = uniform(rng, -50.0, 50.0);
    const double w = wrap_angle(a);
    EXPECT_GE(w, -std::numbers::pi);
    EXPECT_LT(w, std::numbers::pi);
    EXPECT_NEAR(std::remainder(a - w, 2.0 * std::numbers::pi), 0.0, 1e-9);
  }
}

TEST(Geometry, YawQuaternionRoundTrip) {
  for (double yaw : {-3.0, -1.0, 0.0, 0.5, 3.1}) EXPECT_NEAR(yaw_of(yaw_quaternion(yaw)), yaw, 1e-12);
}

TEST(Geometry, IdentityPoseLeavesPointsUnchanged) {
  PointMatrix p(2, 3);
  p << 1, 2, 3, -4, 5, 0.5;
  const auto b = world_to_base({p, Frame::world}, Vec3::Zero(), Quat::Identity());
  EXPECT_EQ(b.frame, Frame::base);
  EXPECT_TRUE(b.points.isApprox(p, 0.0));
}

TEST(Geometry, PureTranslationShiftsPoints) {
  PointMatrix p = PointMatrix::Zero(1, 3);
  const auto b = world_to_base({p, Frame::world}, Vec3(1, 2, 3), Quat::Identity());
  EXPECT_DOUBLE_EQ(b.points(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(b.points(0, 1), -2.0);
  EXPECT_DOUBLE_EQ(b.points(0, 2), -3.0);
}

TEST(Geometry, QuarterTurnYawMatchesHandRotation) {
  PointMatrix p(1, 3);
  p << 1, 0, 0;
  // R(90 deg)^T (1,0,0) = (0,-1,0)
  const auto b = world_to_base({p, Frame::world}, Vec3::Zero(), yaw_quaternion(std::numbers::pi / 2));
  EXPECT_NEAR(b.points(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(b.points(0, 1), -1.0, 1e-15);
  EXPECT_NEAR(b.points(0, 2), 0.0, 1e-15);
}

TEST(Geometry, RoundTripForRandomPoses) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Quat q = random_unit_quaternion(rng);
    const Vec3 pos(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2));
    PointMatrix p(4, 3);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = uniform(rng, -1, 1);
    const auto back = base_to_world(world_to_base({p, Frame::world}, pos, q), pos, q);
    EXPECT_EQ(back.frame, Frame::world);
    EXPECT_LT((back.points - p).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Geometry, RejectsWrongFrameAndNonUnitQuaternion) {
  PointMatrix p = PointMatrix::Zero(1, 3);
  EXPECT_THROW(world_to_base({p, Frame::base}, Vec3::Zero(), Quat::Identity()), GeometryError);
  EXPECT_THROW(base_to_world({p, Frame::world}, Vec3::Zero(), Quat::Identity()), GeometryError);
  EXPECT_THROW(world_to_base({p, Frame::world}, Vec3::Zero(), Quat(2, 0, 0, 0)), GeometryError);
}
