#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "stepstone/dataset.hpp"
#include "stepstone/env.hpp"
#include "stepstone/nn/models.hpp"
#include "stepstone/random.hpp"
#include "stepstone/robot.hpp"

namespace stepstone {

class OracleConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultMaxContactError = 0.08;  // e_max, meters

/// Surrogate low-level controller parameters. A swing foot lands at
/// target + k1 * (target - current) + k2 * v_base + noise, in the xy plane.
struct GaitSpec {
  Gait gait = Gait::jump;
  double cycle_duration = 0.5;  // s
  double k1 = 0.15;             // step-length bias gain
  double k2 = 0.08;             // velocity bias gain, s
  double noise_std = 0.012;     // m, per horizontal axis

  static GaitSpec trot() { return {Gait::trot, 0.6, 0.08, 0.05, 0.008}; }
  static GaitSpec jump() { return {Gait::jump, 0.5, 0.15, 0.08, 0.012}; }
  static GaitSpec of(Gait g) { return g == Gait::trot ? trot() : jump(); }

  void validate() const {
    if (!(cycle_duration > 0.0)) throw OracleConfigError("cycle_duration must be positive");
    if (!(noise_std >= 0.0)) throw OracleConfigError("noise_std must be non-negative");
  }
};

/// Legs that leave the ground in the given transition: all four for a jump,
/// FL+RR then FR+RL alternating for a trot.
inline std::vector<bool> swing_legs(Gait gait, int transition_index, int n_effectors = 4) {
  if (gait == Gait::jump || n_effectors != 4) return std::vector<bool>(static_cast<std::size_t>(n_effectors), true);
  if (transition_index % 2 == 0) return {true, false, false, true};
  return {false, true, true, false};
}

struct StepOutcome {
  PointMatrix achieved;          // world frame
  RobotState next;
  bool success = false;
  double max_error = 0.0;        // largest ||achieved - commanded||
  bool crossed = false;
  bool reach_exceeded = false;
};

/// Executes one gait cycle toward `targets_world`. Failure is reported in the
/// outcome: a commanded foot missed by more than e_max, crossed legs, or a
/// foot beyond leg reach after the base re-centres.
inline StepOutcome step_controller(const RobotState& x, const PointMatrix& targets_world,
                                   const std::vector<bool>& swing, const GaitSpec& gait, const RobotConfig& robot,
                                   Rng& rng, double e_max = kDefaultMaxContactError) {
  gait.validate();
  const int n = robot.n_effectors();
  if (targets_world.rows() != n || static_cast<int>(swing.size()) != n) {
    throw std::invalid_argument("step_controller: effector count mismatch");
  }
  const PointMatrix current = feet_in_world(x, robot).points;
  std::normal_distribution<double> gauss(0.0, 1.0);

  StepOutcome out;
  out.achieved = current;
  for (int j = 0; j < n; ++j) {
    if (!swing[static_cast<std::size_t>(j)]) continue;
    const Vec3 target = targets_world.row(j).transpose();
    Vec2 bias = gait.k1 * (target - current.row(j).transpose()).head<2>() + gait.k2 * x.base_linvel.head<2>();
    if (gait.noise_std > 0.0) {
      const double nx = gauss(rng), ny = gauss(rng);
      bias += gait.noise_std * Vec2(nx, ny);
    }
    out.achieved(j, 0) = target.x() + bias.x();
    out.achieved(j, 1) = target.y() + bias.y();
    out.achieved(j, 2) = target.z();
    out.max_error = std::max(out.max_error, bias.norm());
  }

  RobotState& nx = out.next;
  nx.base_pos = x.base_pos + (out.achieved - current).colwise().mean().transpose();
  const double yaw = stance_yaw(out.achieved);
  nx.base_quat = yaw_quaternion(yaw);
  nx.joints = inverse_kinematics(world_to_base({out.achieved, Frame::world}, nx.base_pos, nx.base_quat), robot);
  nx.base_linvel = (nx.base_pos - x.base_pos) / gait.cycle_duration;
  nx.base_angvel = Vec3(0.0, 0.0, wrap_angle(yaw - yaw_of(x.base_quat)) / gait.cycle_duration);

  // Judged against the heading at takeoff, so a scrambled landing cannot
  // pass by rotating its own reference frame.
  out.crossed = legs_crossed(out.achieved, robot.crossing_margin, yaw_of(x.base_quat));
  for (int j = 0; j < n; ++j) {
    if (nx.joints.segment<3>(3 * j).norm() > robot.l_max) out.reach_exceeded = true;
  }
  out.success = out.max_error <= e_max && !out.crossed && !out.reach_exceeded;
  return out;
}

// Offline data collection -----------------------------------------------------

struct CollectOptions {
  double radius_factor = 1.3;  // swing targets within radius_factor * d_max_kin
  int episode_length = 8;      // transitions before the walk restarts from rest
  bool enforce_balance = true;
  double min_positive = 0.25;
  double max_positive = 0.75;
  int max_rounds = 10;
  double e_max = kDefaultMaxContactError;
};

namespace detail {

inline PointMatrix flat_stance(const RobotConfig& robot) {
  PointMatrix feet(robot.n_effectors(), 3);
  for (int j = 0; j < robot.n_effectors(); ++j) {
    const Vec3& h = robot.hip_offsets[static_cast<std::size_t>(j)];
    feet.row(j) = Vec3(h.x(), h.y(), 0.0).transpose();
  }
  return feet;
}

inline std::vector<TransitionRecord> random_walks(std::size_t n_samples, const GaitSpec& gait, const RobotConfig& robot,
                                                  std::uint64_t seed, const CollectOptions& opt, double radius) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const PointMatrix rest = flat_stance(robot);
  std::vector<TransitionRecord> out;
  out.reserve(n_samples);
  RobotState x = nominal_state(rest, robot);
  int step_in_episode = 0;
  while (out.size() < n_samples) {
    if (step_in_episode >= opt.episode_length) {
      x = nominal_state(rest, robot);
      step_in_episode = 0;
    }
    const auto swing = swing_legs(gait.gait, step_in_episode, robot.n_effectors());
    const PointMatrix current = feet_in_world(x, robot).points;
    PointMatrix targets = current;
    for (int j = 0; j < robot.n_effectors(); ++j) {
      if (!swing[static_cast<std::size_t>(j)]) continue;
      const double r = radius * unit(rng);
      const double a = 2.0 * std::numbers::pi * unit(rng);
      targets(j, 0) += r * std::cos(a);
      targets(j, 1) += r * std::sin(a);
      targets(j, 2) = 0.0;
    }
    TransitionRecord rec;
    rec.gait = gait.gait;
    rec.x = reduce(x);
    rec.e_cur = world_to_base({current, Frame::world}, x.base_pos, x.base_quat).points;
    rec.e_tgt = world_to_base({targets, Frame::world}, x.base_pos, x.base_quat).points;
    const StepOutcome step = step_controller(x, targets, swing, gait, robot, rng, opt.e_max);
    rec.y = step.success ? 1 : 0;
    if (step.success) {
      rec.e_ach = world_to_base({step.achieved, Frame::world}, x.base_pos, x.base_quat).points;
      rec.x_next = reduce(step.next);
      x = step.next;
      ++step_in_episode;
    } else {
      x = nominal_state(rest, robot);
      step_in_episode = 0;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace detail

/// Random-walk data collection on flat ground. The target radius is rescaled
/// until positives make up between min_positive and max_positive of the set.
inline std::vector<TransitionRecord> collect_dataset(std::size_t n_samples, const GaitSpec& gait,
                                                     const RobotConfig& robot, std::uint64_t seed,
                                                     const CollectOptions& opt = {}) {
  if (n_samples == 0) throw OracleConfigError("n_samples must be positive");
  double radius = opt.radius_factor * robot.d_max_kin;
  for (int round = 0; round < std::max(1, opt.max_rounds); ++round) {
    auto records = detail::random_walks(n_samples, gait, robot, seed, opt, radius);
    if (!opt.enforce_balance) return records;
    std::size_t pos = 0;
    for (const auto& r : records) pos += static_cast<std::size_t>(r.y);
    const double frac = static_cast<double>(pos) / static_cast<double>(records.size());
    if (frac >= opt.min_positive && frac <= opt.max_positive) return records;
    radius *= frac < opt.min_positive ? 0.8 : 1.25;
  }
  throw OracleConfigError("class balance unattainable after " + std::to_string(opt.max_rounds) + " rounds");
}

// Full-plan rollout -------------------------------------------------------------

struct RolloutResult {
  bool success = false;
  std::vector<PointMatrix> achieved;    // world contacts after each executed transition
  std::vector<double> contact_errors;   // mean swing-foot distance to stone centers, per step
  std::optional<int> failure_step;
};

inline bool contained(const Stone& stone, const Vec3& p) {
  return std::abs(p.x() - stone.center.x()) <= stone.half_extent.x() &&
         std::abs(p.y() - stone.center.y()) <= stone.half_extent.y();
}

/// Executes a contact plan with the surrogate controller. Targets are the
/// stone centers, shifted by the adjuster's correction when one is given.
/// A step succeeds when the controller succeeds and every swing foot lands
/// inside its stone.
inline RolloutResult rollout_plan(const Environment& env, const std::vector<ContactState>& plan,
                                  const RobotConfig& robot, const GaitSpec& gait,
                                  const nn::TransitionModel* adjuster, std::uint64_t seed,
                                  double e_max = kDefaultMaxContactError) {
  if (plan.empty() || plan.front() != env.start) throw std::invalid_argument("plan must start at the start state");
  for (const auto& s : plan) {
    if (!valid_state(env, s)) throw StoneLookupError("plan references an unknown or duplicated stone");
  }
  Rng rng(seed);
  RolloutResult result;
  RobotState x = nominal_state(contact_locations(env, env.start), robot);
  for (std::size_t i = 1; i < plan.size(); ++i) {
    const PointMatrix centers = contact_locations(env, plan[i]);
    PointMatrix targets = centers;
    if (adjuster != nullptr) {
      const EffectorPositions cur_b = forward_kinematics(reduce(x), robot);
      const EffectorPositions tgt_b = world_to_base({centers, Frame::world}, x.base_pos, x.base_quat);
      const auto res = nn::predict_residual(*adjuster, nn::build_features(reduce(x), cur_b, tgt_b));
      const Mat3 r = x.base_quat.toRotationMatrix();
      for (Eigen::Index j = 0; j < targets.rows(); ++j) {
        const Vec3 dw = r * res.correction.row(j).transpose();
        targets(j, 0) += dw.x();
        targets(j, 1) += dw.y();
      }
    }
    const auto swing = swing_legs(gait.gait, static_cast<int>(i - 1), robot.n_effectors());
    StepOutcome step = step_controller(x, targets, swing, gait, robot, rng, e_max);
    double err = 0.0;
    int n_swing = 0;
    bool on_stones = true;
    for (int j = 0; j < robot.n_effectors(); ++j) {
      if (!swing[static_cast<std::size_t>(j)]) continue;
      const Vec3 a = step.achieved.row(j).transpose();
      err += (a - centers.row(j).transpose()).norm();
      ++n_swing;
      on_stones = on_stones && contained(env.stone(plan[i][static_cast<std::size_t>(j)]), a);
    }
    result.achieved.push_back(step.achieved);
    result.contact_errors.push_back(n_swing > 0 ? err / n_swing : 0.0);
    if (!step.success || !on_stones) {
      result.failure_step = static_cast<int>(i - 1);
      return result;
    }
    x = step.next;
  }
  result.success = true;
  return result;
}

}  // namespace stepstone
