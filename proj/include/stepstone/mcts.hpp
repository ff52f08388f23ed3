#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "stepstone/env.hpp"
#include "stepstone/heuristics.hpp"
#include "stepstone/nn/models.hpp"
#include "stepstone/oracle.hpp"
#include "stepstone/random.hpp"
#include "stepstone/robot.hpp"

namespace stepstone {

class MissingModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SearchConfig {
  int max_iterations = 10000;
  int n_sim = 12;
  double ucb_c = std::numbers::sqrt2;
  double t_feasible = 0.5;
  HeuristicWeights weights;
  std::uint64_t seed = 0;
  int branching_cap = 64;
  bool dynamic_pruning = true;
  bool target_adjustment = true;
  // Also drop classifier-rejected candidates during the greedy simulation.
  bool sim_dynamic_pruning = false;
  GaitSpec gait = GaitSpec::jump();
  double e_max = kDefaultMaxContactError;
  bool record_trace = false;

  void validate() const {
    if (max_iterations <= 0) throw std::invalid_argument("max_iterations must be positive");
    if (n_sim < 1) throw std::invalid_argument("n_sim must be at least 1");
    if (branching_cap < 1) throw std::invalid_argument("branching_cap must be at least 1");
    if (!(ucb_c >= 0.0)) throw std::invalid_argument("ucb_c must be non-negative");
    weights.validate();
    gait.validate();
  }
};

/// Learned models used by the planner. Either may be null when the features
/// that need it are switched off.
struct PlannerModels {
  const nn::FeasibilityClassifier* classifier = nullptr;
  const nn::TransitionModel* transition = nullptr;
};

struct PlanResult {
  bool success = false;
  std::vector<ContactState> plan;
  int iterations = 0;
  int oracle_calls = 0;
  double wall_time_s = 0.0;
  double rollout_time_s = 0.0;
  double mean_contact_error_m = std::numeric_limits<double>::quiet_NaN();  // successful rollout only
  double executed_contact_error_m = std::numeric_limits<double>::quiet_NaN();  // every executed step, all rollouts
  int executed_steps = 0;
};

inline nlohmann::json to_json(const PlanResult& r) {
  nlohmann::json plan = nlohmann::json::array();
  for (const auto& s : r.plan) plan.push_back(state_to_json(s));
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"success", r.success},
          {"plan", plan},
          {"iterations", r.iterations},
          {"oracle_calls", r.oracle_calls},
          {"wall_time_s", r.wall_time_s},
          {"rollout_time_s", r.rollout_time_s},
          {"mean_contact_error_m", num(r.mean_contact_error_m)}};
}

/// One search iteration, recorded when SearchConfig::record_trace is set.
struct IterationTrace {
  std::vector<ContactState> selected;   // root .. selected leaf
  std::vector<ContactState> expanded;   // children added this iteration
  std::vector<ContactState> simulated;  // greedy states after the simulated child
  double reward = 0.0;
  bool rollout = false;
  bool rollout_success = false;
};

/// Kinematically feasible successors of a contact state for the gait's swing
/// pattern, ordered by summed distance to the goal and truncated to `cap`.
class SuccessorGenerator {
 public:
  SuccessorGenerator(const Environment& env, const RobotConfig& robot, Gait gait, int cap)
      : env_(&env), robot_(&robot), gait_(gait), cap_(cap) {
    const auto n = env.stones.size();
    neighbours_.resize(n);
    goal_distance_.resize(static_cast<std::size_t>(env.n_effectors));
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        if ((env.stones[a].center - env.stones[b].center).norm() <= robot.d_max_kin) {
          neighbours_[a].push_back(static_cast<int>(b));
        }
      }
    }
    for (int j = 0; j < env.n_effectors; ++j) {
      const Vec3 g = env.stone(env.goal[static_cast<std::size_t>(j)]).center;
      for (const auto& s : env.stones) goal_distance_[static_cast<std::size_t>(j)].push_back((s.center - g).norm());
    }
  }

  const std::vector<ContactState>& operator()(const ContactState& s, int transition_index) {
    const int parity = gait_ == Gait::trot ? transition_index % 2 : 0;
    auto& memo = memo_[static_cast<std::size_t>(parity)];
    if (auto it = memo.find(s); it != memo.end()) return it->second;
    return memo.emplace(s, enumerate(s, transition_index)).first->second;
  }

  double goal_distance_sum(const ContactState& s) const {
    double d = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) d += goal_distance_[j][static_cast<std::size_t>(s[j].index)];
    return d;
  }

 private:
  std::vector<ContactState> enumerate(const ContactState& s, int transition_index) const {
    const int n = env_->n_effectors;
    const auto swing = swing_legs(gait_, transition_index, n);
    std::vector<std::vector<int>> options(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      const int cur = s[static_cast<std::size_t>(j)].index;
      if (swing[static_cast<std::size_t>(j)]) {
        options[static_cast<std::size_t>(j)] = neighbours_[static_cast<std::size_t>(cur)];
      } else {
        options[static_cast<std::size_t>(j)] = {cur};
      }
    }
    const PointMatrix from = contact_locations(*env_, s);
    std::vector<std::pair<double, ContactState>> found;
    ContactState next = s;
    std::vector<std::size_t> idx(static_cast<std::size_t>(n), 0);
    while (true) {
      for (int j = 0; j < n; ++j) next[static_cast<std::size_t>(j)] = StoneId{options[static_cast<std::size_t>(j)][idx[static_cast<std::size_t>(j)]]};
      if (next != s && valid_state(*env_, next) &&
          kinematic_feasible(from, contact_locations(*env_, next), *robot_)) {
        found.emplace_back(goal_distance_sum(next), next);
      }
      int j = n - 1;
      while (j >= 0 && ++idx[static_cast<std::size_t>(j)] == options[static_cast<std::size_t>(j)].size()) {
        idx[static_cast<std::size_t>(j)] = 0;
        --j;
      }
      if (j < 0) break;
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return a.second.assignment < b.second.assignment;
    });
    if (found.size() > static_cast<std::size_t>(cap_)) found.resize(static_cast<std::size_t>(cap_));
    std::vector<ContactState> out;
    out.reserve(found.size());
    for (auto& f : found) out.push_back(std::move(f.second));
    return out;
  }

  const Environment* env_;
  const RobotConfig* robot_;
  Gait gait_;
  int cap_;
  std::vector<std::vector<int>> neighbours_;
  std::vector<std::vector<double>> goal_distance_;
  std::unordered_map<ContactState, std::vector<ContactState>, ContactStateHash> memo_[2];
};

struct SearchNode {
  ContactState state;
  int parent = -1;
  int depth = 0;
  std::vector<int> children;
  bool expanded = false;
  bool dead = false;
  // Statistics of the edge parent -> this node; for the root, n counts iterations.
  double q = 0.0;
  int n = 0;
  double h_edge = std::numeric_limits<double>::quiet_NaN();
  std::optional<RobotState> predicted;
};

/// UCB of an edge; unvisited edges come first.
inline double ucb_score(double q, int n, int parent_n, double c) {
  if (n == 0) return std::numeric_limits<double>::infinity();
  return q + c * std::sqrt(std::log(static_cast<double>(parent_n)) / static_cast<double>(n));
}

/// Child of `parent` with the highest UCB; ties go to the earliest child.
inline int select_child(const std::vector<SearchNode>& nodes, int parent, double c) {
  const auto& children = nodes[static_cast<std::size_t>(parent)].children;
  if (children.empty()) throw std::logic_error("select_child on a node without children");
  const int parent_n = nodes[static_cast<std::size_t>(parent)].n;
  int best = children.front();
  double best_score = -std::numeric_limits<double>::infinity();
  for (int ch : children) {
    const SearchNode& node = nodes[static_cast<std::size_t>(ch)];
    const double u = ucb_score(node.q, node.n, parent_n, c);
    if (u > best_score) {
      best_score = u;
      best = ch;
    }
  }
  return best;
}

/// Incremental-mean update of one edge.
inline void backup_edge(SearchNode& node, double reward) {
  ++node.n;
  node.q += (reward - node.q) / static_cast<double>(node.n);
}

/// MCTS contact planner. One instance owns one tree and is not thread-safe;
/// separate instances may share the (read-only) environment and models.
class ContactPlanner {
 public:
  using BackupObserver = std::function<void(int node, double reward)>;

  ContactPlanner(const Environment& env, const RobotConfig& robot, PlannerModels models, SearchConfig config)
      : env_(&env),
        robot_(&robot),
        models_(models),
        config_(std::move(config)),
        successors_(env, robot, config_.gait.gait, config_.branching_cap),
        goal_contacts_(contact_locations(env, env.goal)) {
    config_.validate();
    if (!valid_state(env, env.start) || !valid_state(env, env.goal)) throw StoneLookupError("start or goal is invalid");
    if (needs_logits() && models_.classifier == nullptr) {
      throw MissingModelError("the feasibility classifier is required for dynamic pruning or alpha > 0");
    }
    if ((needs_prediction() || config_.target_adjustment) && models_.transition == nullptr) {
      throw MissingModelError("the two-head transition model is required for the enabled features");
    }
    SearchNode root;
    root.state = env.start;
    root.predicted = nominal_state(contact_locations(env, env.start), robot);
    root.h_edge = h_goal(contact_locations(env, env.start), goal_contacts_, env.d_max_map);
    nodes_.push_back(std::move(root));
  }

  void set_backup_observer(BackupObserver obs) { observer_ = std::move(obs); }

  const std::vector<SearchNode>& nodes() const { return nodes_; }
  const std::vector<IterationTrace>& trace() const { return trace_; }
  const SearchConfig& config() const { return config_; }

  /// Runs the search until the first successful rollout or the iteration budget.
  PlanResult plan() {
    const auto t0 = std::chrono::steady_clock::now();
    while (result_.iterations < config_.max_iterations && !result_.success) iterate();
    result_.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (executed_steps_ > 0) result_.executed_contact_error_m = executed_error_sum_ / executed_steps_;
    result_.executed_steps = executed_steps_;
    return result_;
  }

  /// One select / expand / simulate / backpropagate cycle.
  void iterate() {
    ++result_.iterations;
    IterationTrace tr;
    std::vector<int> path = select();
    if (config_.record_trace) tr.selected = states_of(path);

    int leaf = path.back();
    double reward = 0.0;
    if (is_goal(nodes_[static_cast<std::size_t>(leaf)].state, env_->goal)) {
      reward = simulate(path, tr);
    } else if (nodes_[static_cast<std::size_t>(leaf)].dead) {
      reward = -goal_value(leaf);
    } else {
      expand(path);
      const auto& children = nodes_[static_cast<std::size_t>(leaf)].children;
      if (config_.record_trace) {
        for (int c : children) tr.expanded.push_back(nodes_[static_cast<std::size_t>(c)].state);
      }
      if (children.empty()) {
        reward = -goal_value(leaf);
      } else {
        path.push_back(children.front());
        reward = simulate(path, tr);
      }
    }
    backpropagate(path, reward);
    tr.reward = reward;
    if (config_.record_trace) trace_.push_back(std::move(tr));
  }

  /// UCB descent from the root to a node that is unexpanded or terminal.
  std::vector<int> select() const {
    std::vector<int> path{0};
    while (true) {
      const SearchNode& node = nodes_[static_cast<std::size_t>(path.back())];
      if (!node.expanded || node.dead || is_goal(node.state, env_->goal)) return path;
      path.push_back(select_child(nodes_, path.back(), config_.ucb_c));
    }
  }

 private:
  bool needs_logits() const { return config_.dynamic_pruning || config_.weights.alpha > 0.0; }
  bool needs_residuals() const { return config_.weights.beta > 0.0; }
  bool needs_prediction() const { return needs_logits() || needs_residuals(); }

  std::vector<ContactState> states_of(const std::vector<int>& path) const {
    std::vector<ContactState> out;
    for (int i : path) out.push_back(nodes_[static_cast<std::size_t>(i)].state);
    return out;
  }

  double goal_value(int node) const {
    return h_goal(contact_locations(*env_, nodes_[static_cast<std::size_t>(node)].state), goal_contacts_, env_->d_max_map);
  }

  struct Scores {
    std::vector<double> h;
    std::vector<double> logits;  // empty unless the classifier ran
    nn::Matrix states;           // predicted next states, when the transition model ran
  };

  nn::Matrix features(const RobotState& x, const ContactState& s, const std::vector<ContactState>& next) const {
    const EffectorPositions cur = world_to_base({contact_locations(*env_, s), Frame::world}, x.base_pos, x.base_quat);
    const ReducedRobotState xr = reduce(x);
    nn::Matrix f(nn::feature_dim(env_->n_effectors), static_cast<Eigen::Index>(next.size()));
    for (std::size_t i = 0; i < next.size(); ++i) {
      const EffectorPositions nb =
          world_to_base({contact_locations(*env_, next[i]), Frame::world}, x.base_pos, x.base_quat);
      f.col(static_cast<Eigen::Index>(i)) = nn::build_features(xr, cur, nb);
    }
    return f;
  }

  /// Combined heuristic for every candidate, batched through the networks.
  Scores score(const RobotState* x, const ContactState& s, const std::vector<ContactState>& next,
               bool want_logits) const {
    Scores out;
    out.h.resize(next.size());
    for (std::size_t i = 0; i < next.size(); ++i) {
      out.h[i] = h_goal(contact_locations(*env_, next[i]), goal_contacts_, env_->d_max_map);
    }
    if (next.empty() || x == nullptr) return out;
    const bool logits = want_logits || config_.weights.alpha > 0.0;
    if (!logits && !needs_residuals()) return out;
    const nn::Matrix f = features(*x, s, next);
    if (logits) {
      const nn::Vector z = models_.classifier->logits(f);
      out.logits.assign(z.data(), z.data() + z.size());
    }
    std::vector<double> delta;
    if (needs_residuals()) {
      auto pred = models_.transition->predict(f);
      out.states = std::move(pred.states);
      for (Eigen::Index c = 0; c < pred.residuals.cols(); ++c) {
        delta.push_back(nn::residual_from_column(pred.residuals.col(c)).delta_res);
      }
    }
    for (std::size_t i = 0; i < next.size(); ++i) {
      const double safety = config_.weights.alpha > 0.0 ? h_safety(out.logits[i]) : 0.0;
      const double acc = needs_residuals() ? h_accuracy(delta[i]) : 0.0;
      out.h[i] = combined_h(out.h[i], safety, acc, config_.weights);
    }
    return out;
  }

  bool feasible_logit(double z) const { return nn::sigmoid(z) >= config_.t_feasible; }

  /// Chains the state predictor and the base translation estimate one step.
  RobotState predict_step(const RobotState& x, const ContactState& s, const ContactState& next) const {
    const auto out = models_.transition->predict(features(x, s, {next}));
    return chain_state(x, next, out.states.col(0));
  }

  RobotState chain_state(const RobotState& x, const ContactState& next, const Eigen::Ref<const nn::Vector>& state) const {
    const ReducedRobotState xr = nn::decode_state(state, env_->n_effectors);
    const EffectorPositions target_b =
        world_to_base({contact_locations(*env_, next), Frame::world}, x.base_pos, x.base_quat);
    EffectorPositions fk = forward_kinematics(xr, *robot_);
    const Vec3 t = estimate_translation(target_b, fk);
    return with_position(xr, chain_base_position(x.base_pos, x.base_quat, t));
  }

  const RobotState* predicted(int node) {
    if (!needs_prediction()) return nullptr;
    SearchNode& n = nodes_[static_cast<std::size_t>(node)];
    if (!n.predicted) {
      const RobotState* parent = predicted(n.parent);
      nodes_[static_cast<std::size_t>(node)].predicted =
          predict_step(*parent, nodes_[static_cast<std::size_t>(n.parent)].state, nodes_[static_cast<std::size_t>(node)].state);
    }
    return &*nodes_[static_cast<std::size_t>(node)].predicted;
  }

  static bool on_path(const std::vector<ContactState>& path, const ContactState& s) {
    return std::find(path.begin(), path.end(), s) != path.end();
  }

  void expand(const std::vector<int>& path) {
    const int leaf = path.back();
    const std::vector<ContactState> ancestors = states_of(path);
    const ContactState state = nodes_[static_cast<std::size_t>(leaf)].state;
    const int depth = nodes_[static_cast<std::size_t>(leaf)].depth;
    std::vector<ContactState> cands;
    for (const auto& c : successors_(state, depth)) {
      if (!on_path(ancestors, c)) cands.push_back(c);
    }
    const RobotState* x = predicted(leaf);
    const Scores sc = score(x, state, cands, config_.dynamic_pruning);
    nodes_[static_cast<std::size_t>(leaf)].expanded = true;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (config_.dynamic_pruning && !feasible_logit(sc.logits[i])) continue;
      SearchNode child;
      child.state = cands[i];
      child.parent = leaf;
      child.depth = depth + 1;
      child.h_edge = sc.h[i];
      nodes_.push_back(std::move(child));
      nodes_[static_cast<std::size_t>(leaf)].children.push_back(static_cast<int>(nodes_.size()) - 1);
    }
    if (nodes_[static_cast<std::size_t>(leaf)].children.empty()) nodes_[static_cast<std::size_t>(leaf)].dead = true;
  }

  /// Greedy descent from the last node of `path`; rolls out the full plan
  /// when the goal is reached.
  double simulate(const std::vector<int>& path, IterationTrace& tr) {
    std::vector<ContactState> sim = states_of(path);
    const int start = path.back();
    double h_star = nodes_[static_cast<std::size_t>(start)].h_edge;
    ContactState cur = nodes_[static_cast<std::size_t>(start)].state;
    int depth = nodes_[static_cast<std::size_t>(start)].depth;
    std::optional<RobotState> x;
    if (const RobotState* p = predicted(start)) x = *p;
    const bool prune = config_.sim_dynamic_pruning && config_.dynamic_pruning;

    for (int step = 0; step < config_.n_sim && !is_goal(cur, env_->goal); ++step) {
      std::vector<ContactState> cands;
      for (const auto& c : successors_(cur, depth)) {
        if (!on_path(sim, c)) cands.push_back(c);
      }
      const Scores sc = score(x ? &*x : nullptr, cur, cands, prune);
      std::optional<std::size_t> best;
      for (std::size_t i = 0; i < cands.size(); ++i) {
        if (prune && !feasible_logit(sc.logits[i])) continue;
        if (!best || sc.h[i] > sc.h[*best]) best = i;
      }
      if (!best) break;
      h_star = std::max(h_star, sc.h[*best]);
      if (x) {
        x = sc.states.cols() > 0 ? chain_state(*x, cands[*best], sc.states.col(static_cast<Eigen::Index>(*best)))
                                 : predict_step(*x, cur, cands[*best]);
      }
      const std::size_t pick = *best;
      cur = cands[pick];
      sim.push_back(cur);
      if (config_.record_trace) tr.simulated.push_back(cur);
      ++depth;
    }
    if (!is_goal(cur, env_->goal)) return h_star;

    tr.rollout = true;
    const bool ok = rollout(sim);
    tr.rollout_success = ok;
    return ok ? h_star : -h_star;
  }

  bool rollout(const std::vector<ContactState>& plan) {
    const auto t0 = std::chrono::steady_clock::now();
    const nn::TransitionModel* adjuster = config_.target_adjustment ? models_.transition : nullptr;
    const std::uint64_t seed = derive_seed(config_.seed, {static_cast<std::uint64_t>(result_.oracle_calls)});
    ++result_.oracle_calls;
    const RolloutResult r = rollout_plan(*env_, plan, *robot_, config_.gait, adjuster, seed, config_.e_max);
    result_.rollout_time_s += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (double e : r.contact_errors) executed_error_sum_ += e;
    executed_steps_ += static_cast<int>(r.contact_errors.size());
    if (r.success) {
      result_.success = true;
      result_.plan = plan;
      double sum = 0.0;
      for (double e : r.contact_errors) sum += e;
      result_.mean_contact_error_m = r.contact_errors.empty() ? 0.0 : sum / static_cast<double>(r.contact_errors.size());
    }
    return r.success;
  }

  void backpropagate(const std::vector<int>& path, double reward) {
    ++nodes_.front().n;
    for (std::size_t k = 1; k < path.size(); ++k) {
      backup_edge(nodes_[static_cast<std::size_t>(path[k])], reward);
      if (observer_) observer_(path[k], reward);
    }
  }

  const Environment* env_;
  const RobotConfig* robot_;
  PlannerModels models_;
  SearchConfig config_;
  SuccessorGenerator successors_;
  PointMatrix goal_contacts_;
  std::vector<SearchNode> nodes_;
  std::vector<IterationTrace> trace_;
  BackupObserver observer_;
  PlanResult result_;
  double executed_error_sum_ = 0.0;
  int executed_steps_ = 0;
};

inline PlanResult plan(const Environment& env, const RobotConfig& robot, PlannerModels models, const SearchConfig& config) {
  ContactPlanner planner(env, robot, models, config);
  return planner.plan();
}

}  // namespace stepstone
