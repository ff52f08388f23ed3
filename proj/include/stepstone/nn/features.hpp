#pragma once

#include <stdexcept>

#include "stepstone/geometry.hpp"
#include "stepstone/nn/mlp.hpp"
#include "stepstone/robot.hpp"

namespace stepstone::nn {

class StateDecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reduced state layout: quaternion (w, x, y, z), joints (3 per leg),
// linear velocity, angular velocity. Joint velocities are not part of it.
constexpr int state_dim(int n_effectors) { return 4 + 3 * n_effectors + 6; }
constexpr int residual_dim(int n_effectors) { return 3 * n_effectors; }
constexpr int feature_dim(int n_effectors) { return state_dim(n_effectors) + 6 * n_effectors; }

inline Vector encode_state(const ReducedRobotState& x) {
  const auto n = x.joints.size();
  Vector v(10 + n);
  v << x.base_quat.w(), x.base_quat.x(), x.base_quat.y(), x.base_quat.z(), x.joints, x.base_linvel, x.base_angvel;
  return v;
}

/// Inverse of encode_state; the quaternion block is renormalized.
inline ReducedRobotState decode_state(const Eigen::Ref<const Vector>& v, int n_effectors) {
  if (v.size() != state_dim(n_effectors)) throw ShapeError("state vector has the wrong length");
  ReducedRobotState x;
  Eigen::Vector4d q = v.head<4>();
  const double norm = q.norm();
  if (!(norm > 1e-12) || !std::isfinite(norm)) throw StateDecodeError("quaternion block has zero norm");
  q /= norm;
  x.base_quat = Quat(q[0], q[1], q[2], q[3]);
  x.joints = v.segment(4, 3 * n_effectors);
  x.base_linvel = v.segment<3>(4 + 3 * n_effectors);
  x.base_angvel = v.segment<3>(7 + 3 * n_effectors);
  return x;
}

inline Vector flatten(const PointMatrix& points) {
  Vector v(points.size());
  for (Eigen::Index j = 0; j < points.rows(); ++j) v.segment<3>(3 * j) = points.row(j).transpose();
  return v;
}

inline PointMatrix unflatten(const Eigen::Ref<const Vector>& v) {
  if (v.size() % 3 != 0) throw ShapeError("flattened points must have a multiple of 3 entries");
  PointMatrix p(v.size() / 3, 3);
  for (Eigen::Index j = 0; j < p.rows(); ++j) p.row(j) = v.segment<3>(3 * j).transpose();
  return p;
}

/// Network input [x_bar ; current contacts ; next contacts], contacts in the
/// current base frame.
inline Vector build_features(const ReducedRobotState& x, const EffectorPositions& current,
                             const EffectorPositions& next) {
  if (current.frame != Frame::base || next.frame != Frame::base) {
    throw GeometryError("network contacts must be expressed in the base frame");
  }
  if (current.size() != next.size()) throw ShapeError("contact sets differ in size");
  const Vector s = encode_state(x);
  Vector f(s.size() + 6 * current.size());
  f << s, flatten(current.points), flatten(next.points);
  return f;
}

}  // namespace stepstone::nn
