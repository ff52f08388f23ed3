#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace stepstone {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

// One row per end-effector, columns x/y/z in meters.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kUnitQuaternionTolerance = 1e-9;

inline void require_unit(const Quat& q) {
  if (!(std::abs(q.norm() - 1.0) <= kUnitQuaternionTolerance)) {
    throw GeometryError("quaternion is not unit norm (|q| = " + std::to_string(q.norm()) + ")");
  }
}

inline double wrap_angle(double angle) {
  angle = std::fmod(angle + std::numbers::pi, 2.0 * std::numbers::pi);
  if (angle < 0.0) angle += 2.0 * std::numbers::pi;
  return angle - std::numbers::pi;
}

inline Quat yaw_quaternion(double yaw) {
  return Quat(std::cos(0.5 * yaw), 0.0, 0.0, std::sin(0.5 * yaw));
}

inline double yaw_of(const Quat& q) {
  return std::atan2(2.0 * (q.w() * q.z() + q.x() * q.y()),
                    1.0 - 2.0 * (q.y() * q.y() + q.z() * q.z()));
}

enum class Frame { world, base };

inline const char* to_string(Frame f) { return f == Frame::world ? "world" : "base"; }

struct EffectorPositions {
  PointMatrix points;
  Frame frame = Frame::world;

  Eigen::Index size() const { return points.rows(); }
  Vec3 row(Eigen::Index j) const { return points.row(j).transpose(); }
};

/// Express world-frame points in the base frame: p_B = R(q)^T (p_W - base_pos).
inline EffectorPositions world_to_base(const EffectorPositions& points, const Vec3& base_pos,
                                       const Quat& base_quat) {
  require_unit(base_quat);
  if (points.frame != Frame::world) throw GeometryError("world_to_base expects world-frame points");
  const Mat3 rt = base_quat.toRotationMatrix().transpose();
  EffectorPositions out{PointMatrix(points.size(), 3), Frame::base};
  for (Eigen::Index j = 0; j < points.size(); ++j) {
    out.points.row(j) = (rt * (points.row(j) - base_pos)).transpose();
  }
  return out;
}

inline EffectorPositions base_to_world(const EffectorPositions& points, const Vec3& base_pos,
                                       const Quat& base_quat) {
  require_unit(base_quat);
  if (points.frame != Frame::base) throw GeometryError("base_to_world expects base-frame points");
  const Mat3 r = base_quat.toRotationMatrix();
  EffectorPositions out{PointMatrix(points.size(), 3), Frame::world};
  for (Eigen::Index j = 0; j < points.size(); ++j) {
    out.points.row(j) = (r * points.row(j) + base_pos).transpose();
  }
  return out;
}

}  // namespace stepstone
