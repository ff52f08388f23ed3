#pragma once

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "stepstone/env.hpp"
#include "stepstone/geometry.hpp"

namespace stepstone {

// Effector order used throughout.
enum Leg : int { kFrontLeft = 0, kFrontRight = 1, kRearLeft = 2, kRearRight = 3 };

struct RobotConfig {
  // Hip anchors in the base frame, FL, FR, RL, RR.
  std::vector<Vec3> hip_offsets = {Vec3(0.19, 0.12, 0.0), Vec3(0.19, -0.12, 0.0), Vec3(-0.19, 0.12, 0.0),
                                   Vec3(-0.19, -0.12, 0.0)};
  double l_max = 0.35;           // leg reach, hip to foot
  double d_max_kin = 0.24;       // longest single-effector displacement per transition
  double nominal_height = 0.27;  // base height above the stance centroid
  double crossing_margin = 0.01;

  int n_effectors() const { return static_cast<int>(hip_offsets.size()); }
};

/// Full robot state; joints hold one 3-vector per leg (foot offset from its hip).
struct RobotState {
  Vec3 base_pos = Vec3::Zero();
  Quat base_quat = Quat::Identity();
  Eigen::VectorXd joints;
  Vec3 base_linvel = Vec3::Zero();
  Vec3 base_angvel = Vec3::Zero();
};

/// Robot state without the absolute base position.
struct ReducedRobotState {
  Quat base_quat = Quat::Identity();
  Eigen::VectorXd joints;
  Vec3 base_linvel = Vec3::Zero();
  Vec3 base_angvel = Vec3::Zero();
};

inline ReducedRobotState reduce(const RobotState& x) {
  return {x.base_quat, x.joints, x.base_linvel, x.base_angvel};
}

inline RobotState with_position(const ReducedRobotState& x, const Vec3& base_pos) {
  return {base_pos, x.base_quat, x.joints, x.base_linvel, x.base_angvel};
}

/// Surrogate forward kinematics: joint coordinates are foot offsets from the
/// hip anchors, so foot j = hip_j + joints[3j..3j+3] in the base frame.
inline EffectorPositions forward_kinematics(const ReducedRobotState& x, const RobotConfig& robot) {
  const int n = robot.n_effectors();
  if (x.joints.size() != 3 * n) throw std::invalid_argument("joint vector length does not match the robot");
  EffectorPositions out{PointMatrix(n, 3), Frame::base};
  for (int j = 0; j < n; ++j) out.points.row(j) = (robot.hip_offsets[static_cast<std::size_t>(j)] + x.joints.segment<3>(3 * j)).transpose();
  return out;
}

inline Eigen::VectorXd inverse_kinematics(const EffectorPositions& feet_base, const RobotConfig& robot) {
  if (feet_base.frame != Frame::base) throw GeometryError("inverse_kinematics expects base-frame feet");
  const int n = robot.n_effectors();
  Eigen::VectorXd q(3 * n);
  for (int j = 0; j < n; ++j) q.segment<3>(3 * j) = feet_base.row(j) - robot.hip_offsets[static_cast<std::size_t>(j)];
  return q;
}

/// Translation minimizing the mean squared distance between shifted FK feet
/// and the targets: the mean of the per-effector differences.
inline Vec3 estimate_translation(const EffectorPositions& targets, const EffectorPositions& fk_feet) {
  if (targets.size() != fk_feet.size() || targets.size() == 0) {
    throw std::invalid_argument("estimate_translation needs matching non-empty effector sets");
  }
  return (targets.points - fk_feet.points).colwise().mean().transpose();
}

inline Vec3 chain_base_position(const Vec3& prev_pos, const Quat& prev_quat, const Vec3& t_local) {
  require_unit(prev_quat);
  return prev_pos + prev_quat.toRotationMatrix() * t_local;
}

/// Heading of a stance: direction from the rear-pair midpoint to the front-pair midpoint.
inline double stance_yaw(const PointMatrix& feet_world) {
  const Vec3 front = 0.5 * (feet_world.row(kFrontLeft) + feet_world.row(kFrontRight)).transpose();
  const Vec3 rear = 0.5 * (feet_world.row(kRearLeft) + feet_world.row(kRearRight)).transpose();
  return std::atan2(front.y() - rear.y(), front.x() - rear.x());
}

inline Vec3 stance_centroid(const PointMatrix& feet_world) { return feet_world.colwise().mean().transpose(); }

/// Crossing predicate in a frame with the given heading: left feet must stay
/// left of right feet and front feet ahead of rear feet, each by at least `margin`.
inline bool legs_crossed(const PointMatrix& feet_world, double margin, double yaw) {
  if (feet_world.rows() != 4) return false;
  const double c = std::cos(yaw), s = std::sin(yaw);
  const Vec3 o = stance_centroid(feet_world);
  Eigen::Matrix<double, 4, 2> local;
  for (int j = 0; j < 4; ++j) {
    const double dx = feet_world(j, 0) - o.x(), dy = feet_world(j, 1) - o.y();
    local(j, 0) = c * dx + s * dy;
    local(j, 1) = -s * dx + c * dy;
  }
  const bool ok = local(kFrontLeft, 1) > local(kFrontRight, 1) + margin &&
                  local(kRearLeft, 1) > local(kRearRight, 1) + margin &&
                  local(kFrontLeft, 0) > local(kRearLeft, 0) + margin &&
                  local(kFrontRight, 0) > local(kRearRight, 0) + margin;
  return !ok;
}

/// Crossing judged in the stance's own frame (heading from rear to front pair).
inline bool legs_crossed(const PointMatrix& feet_world, double margin) {
  return legs_crossed(feet_world, margin, stance_yaw(feet_world));
}

inline double max_displacement(const PointMatrix& from, const PointMatrix& to) {
  return (to - from).rowwise().norm().maxCoeff();
}

inline bool kinematic_feasible(const PointMatrix& from, const PointMatrix& to, const RobotConfig& robot) {
  if (max_displacement(from, to) > robot.d_max_kin) return false;
  return !legs_crossed(to, robot.crossing_margin);
}

inline bool kinematic_feasible(const ContactState& s, const ContactState& next, const Environment& env,
                               const RobotConfig& robot) {
  return kinematic_feasible(contact_locations(env, s), contact_locations(env, next), robot);
}

/// Resting state standing on the given world contacts: base above the stance
/// centroid, heading from the stance, zero velocities.
inline RobotState nominal_state(const PointMatrix& feet_world, const RobotConfig& robot) {
  RobotState x;
  x.base_pos = stance_centroid(feet_world) + Vec3(0.0, 0.0, robot.nominal_height);
  x.base_quat = yaw_quaternion(stance_yaw(feet_world));
  x.joints = inverse_kinematics(world_to_base({feet_world, Frame::world}, x.base_pos, x.base_quat), robot);
  return x;
}

inline EffectorPositions feet_in_world(const RobotState& x, const RobotConfig& robot) {
  return base_to_world(forward_kinematics(reduce(x), robot), x.base_pos, x.base_quat);
}

// Robot config file ---------------------------------------------------------

inline RobotConfig robot_config_from_json(const nlohmann::json& j) {
  RobotConfig robot;
  if (j.contains("hip_offsets")) {
    robot.hip_offsets.clear();
    for (const auto& h : j.at("hip_offsets")) {
      robot.hip_offsets.emplace_back(h.at(0).get<double>(), h.at(1).get<double>(), h.at(2).get<double>());
    }
  }
  robot.l_max = j.value("l_max", robot.l_max);
  robot.d_max_kin = j.value("d_max_kin", robot.d_max_kin);
  robot.nominal_height = j.value("nominal_height", robot.nominal_height);
  robot.crossing_margin = j.value("crossing_margin", robot.crossing_margin);
  if (j.contains("n_effectors") && j.at("n_effectors").get<int>() != robot.n_effectors()) {
    throw std::invalid_argument("n_effectors does not match the number of hip anchors");
  }
  return robot;
}

inline nlohmann::json robot_config_to_json(const RobotConfig& robot) {
  nlohmann::json hips = nlohmann::json::array();
  for (const Vec3& h : robot.hip_offsets) hips.push_back({h.x(), h.y(), h.z()});
  return {{"hip_offsets", hips},          {"l_max", robot.l_max},
          {"d_max_kin", robot.d_max_kin}, {"nominal_height", robot.nominal_height},
          {"crossing_margin", robot.crossing_margin}, {"n_effectors", robot.n_effectors()}};
}

inline RobotConfig load_robot_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return robot_config_from_json(nlohmann::json::parse(in));
}

}  // namespace stepstone
