#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "stepstone/geometry.hpp"
#include "stepstone/random.hpp"

namespace stepstone {

class EnvironmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StoneLookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct StoneId {
  int index = -1;
  friend auto operator<=>(const StoneId&, const StoneId&) = default;
};

struct Stone {
  StoneId id;
  Vec3 center = Vec3::Zero();
  Vec2 half_extent = Vec2::Constant(0.04);
  // Cell of the generating grid; (-1, -1) for hand-built layouts.
  int cell_x = -1;
  int cell_y = -1;
};

/// Stone assignment per end-effector, ordered FL, FR, RL, RR.
struct ContactState {
  std::vector<StoneId> assignment;

  ContactState() = default;
  explicit ContactState(std::vector<StoneId> ids) : assignment(std::move(ids)) {}
  ContactState(std::initializer_list<int> ids) {
    for (int i : ids) assignment.push_back(StoneId{i});
  }

  std::size_t size() const { return assignment.size(); }
  StoneId operator[](std::size_t j) const { return assignment[j]; }
  StoneId& operator[](std::size_t j) { return assignment[j]; }
  friend bool operator==(const ContactState&, const ContactState&) = default;
};

struct ContactStateHash {
  std::size_t operator()(const ContactState& s) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (StoneId id : s.assignment) h = splitmix64(h ^ static_cast<std::uint64_t>(id.index + 1));
    return static_cast<std::size_t>(h);
  }
};

struct EnvConfig {
  int cols = 7;  // along +x, the direction of travel
  int rows = 5;
  double spacing_x = 0.19;
  double spacing_y = 0.12;
  double side = 0.08;
  int n_removed = 9;
  double displacement = 0.75;   // epsilon ~ U(-d, d) scaling (e/2 - r)
  double height_noise = 0.02;   // meters
  int stance_cols = 2;          // grid cells between rear and front feet
  int stance_rows = 2;          // grid cells between right and left feet
  int n_effectors = 4;
};

struct Environment {
  std::vector<Stone> stones;
  int n_effectors = 4;
  EnvConfig config;
  ContactState start;
  ContactState goal;
  std::uint64_t seed = 0;
  double d_max_map = 0.0;  // largest pairwise stone-center distance

  bool live(StoneId id) const { return id.index >= 0 && id.index < static_cast<int>(stones.size()); }

  const Stone& stone(StoneId id) const {
    if (!live(id)) throw StoneLookupError("unknown stone id " + std::to_string(id.index));
    return stones[static_cast<std::size_t>(id.index)];
  }
};

inline double max_pairwise_distance(const std::vector<Stone>& stones) {
  double best = 0.0;
  for (std::size_t a = 0; a < stones.size(); ++a) {
    for (std::size_t b = a + 1; b < stones.size(); ++b) {
      best = std::max(best, (stones[a].center - stones[b].center).norm());
    }
  }
  return best;
}

inline bool valid_state(const Environment& env, const ContactState& s) {
  if (static_cast<int>(s.size()) != env.n_effectors) return false;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (!env.live(s[j])) return false;
    for (std::size_t k = 0; k < j; ++k) {
      if (s[j] == s[k]) return false;
    }
  }
  return true;
}

inline bool stones_overlap(const Stone& a, const Stone& b) {
  const Vec2 gap = (a.center - b.center).head<2>().cwiseAbs();
  return gap.x() < a.half_extent.x() + b.half_extent.x() && gap.y() < a.half_extent.y() + b.half_extent.y();
}

/// Checks a hand-built or loaded environment and fills the cached map diameter.
inline void finalize_environment(Environment& env) {
  for (std::size_t i = 0; i < env.stones.size(); ++i) {
    const Stone& s = env.stones[i];
    if (s.id.index != static_cast<int>(i)) throw EnvironmentError("stone ids must be dense and ordered");
    if (!(s.half_extent.x() > 0.0 && s.half_extent.y() > 0.0)) {
      throw EnvironmentError("stone half extents must be positive");
    }
    for (std::size_t k = 0; k < i; ++k) {
      if (stones_overlap(s, env.stones[k])) {
        throw EnvironmentError("stones " + std::to_string(k) + " and " + std::to_string(i) + " overlap");
      }
    }
  }
  if (!valid_state(env, env.start)) throw EnvironmentError("start state references invalid stones");
  if (!valid_state(env, env.goal)) throw EnvironmentError("goal state references invalid stones");
  env.d_max_map = max_pairwise_distance(env.stones);
}

/// Randomized stepping-stone field: a cols x rows grid, each stone displaced by
/// eps * (e/2 - r) per axis, eps ~ U(-displacement, displacement), heights
/// perturbed by U(-height_noise, height_noise), and n_removed stones dropped.
/// Start and goal stances are never removed.
inline Environment generate_environment(std::uint64_t seed, const EnvConfig& config) {
  const double r = 0.5 * config.side;
  if (config.cols < 1 || config.rows < 1) throw EnvironmentError("grid must be non-empty");
  if (!(config.side > 0.0)) throw EnvironmentError("stone side must be positive");
  if (!(config.spacing_x > config.side && config.spacing_y > config.side)) {
    throw EnvironmentError("grid spacing too small for the stone size");
  }
  if (config.n_effectors != 4) throw EnvironmentError("grid stances are defined for four effectors");
  const int center_row = config.rows / 2;
  const int left_row = center_row + config.stance_rows / 2;
  const int right_row = left_row - config.stance_rows;
  const int goal_front = config.cols - 1;
  const int goal_rear = goal_front - config.stance_cols;
  if (config.stance_cols < 1 || config.stance_rows < 1 || right_row < 0 || left_row >= config.rows ||
      goal_rear <= config.stance_cols) {
    throw EnvironmentError("start and goal stances do not fit on the grid");
  }

  Rng rng(seed);
  const double amp_x = config.displacement * (0.5 * config.spacing_x - r);
  const double amp_y = config.displacement * (0.5 * config.spacing_y - r);
  const double y0 = -0.5 * (config.rows - 1) * config.spacing_y;

  struct Cell {
    int ix, iy;
    Vec3 center;
  };
  std::vector<Cell> cells;
  cells.reserve(static_cast<std::size_t>(config.cols * config.rows));
  for (int ix = 0; ix < config.cols; ++ix) {
    for (int iy = 0; iy < config.rows; ++iy) {
      const double ex = uniform(rng, -1.0, 1.0);
      const double ey = uniform(rng, -1.0, 1.0);
      const double eh = uniform(rng, -config.height_noise, config.height_noise);
      cells.push_back({ix, iy,
                       Vec3(ix * config.spacing_x + ex * amp_x, y0 + iy * config.spacing_y + ey * amp_y, eh)});
    }
  }

  auto cell_index = [&](int ix, int iy) { return ix * config.rows + iy; };
  // FL, FR, RL, RR
  const std::vector<int> start_cells = {cell_index(config.stance_cols, left_row),
                                        cell_index(config.stance_cols, right_row), cell_index(0, left_row),
                                        cell_index(0, right_row)};
  const std::vector<int> goal_cells = {cell_index(goal_front, left_row), cell_index(goal_front, right_row),
                                       cell_index(goal_rear, left_row), cell_index(goal_rear, right_row)};

  std::vector<int> removable;
  for (int c = 0; c < static_cast<int>(cells.size()); ++c) {
    const bool protected_cell = std::find(start_cells.begin(), start_cells.end(), c) != start_cells.end() ||
                                std::find(goal_cells.begin(), goal_cells.end(), c) != goal_cells.end();
    if (!protected_cell) removable.push_back(c);
  }
  if (config.n_removed < 0 || config.n_removed > static_cast<int>(removable.size())) {
    throw EnvironmentError("cannot remove " + std::to_string(config.n_removed) + " stones");
  }
  // Partial Fisher-Yates over the removable cells.
  std::vector<bool> removed(cells.size(), false);
  for (int k = 0; k < config.n_removed; ++k) {
    std::uniform_int_distribution<int> pick(k, static_cast<int>(removable.size()) - 1);
    std::swap(removable[static_cast<std::size_t>(k)], removable[static_cast<std::size_t>(pick(rng))]);
    removed[static_cast<std::size_t>(removable[static_cast<std::size_t>(k)])] = true;
  }

  Environment env;
  env.seed = seed;
  env.config = config;
  env.n_effectors = config.n_effectors;
  std::vector<int> id_of_cell(cells.size(), -1);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (removed[c]) continue;
    Stone st;
    st.id = StoneId{static_cast<int>(env.stones.size())};
    st.center = cells[c].center;
    st.half_extent = Vec2::Constant(r);
    st.cell_x = cells[c].ix;
    st.cell_y = cells[c].iy;
    id_of_cell[c] = st.id.index;
    env.stones.push_back(st);
  }
  for (int c : start_cells) env.start.assignment.push_back(StoneId{id_of_cell[static_cast<std::size_t>(c)]});
  for (int c : goal_cells) env.goal.assignment.push_back(StoneId{id_of_cell[static_cast<std::size_t>(c)]});
  finalize_environment(env);
  return env;
}

inline PointMatrix contact_locations(const Environment& env, const ContactState& s) {
  PointMatrix out(static_cast<Eigen::Index>(s.size()), 3);
  for (std::size_t j = 0; j < s.size(); ++j) {
    out.row(static_cast<Eigen::Index>(j)) = env.stone(s[j]).center.transpose();
  }
  return out;
}

inline bool is_goal(const ContactState& s, const ContactState& goal) { return s == goal; }

// JSON --------------------------------------------------------------------

inline nlohmann::json state_to_json(const ContactState& s) {
  nlohmann::json j = nlohmann::json::array();
  for (StoneId id : s.assignment) j.push_back(id.index);
  return j;
}

inline ContactState state_from_json(const nlohmann::json& j) {
  ContactState s;
  for (const auto& v : j) s.assignment.push_back(StoneId{v.get<int>()});
  return s;
}

inline nlohmann::json environment_to_json(const Environment& env) {
  nlohmann::json stones = nlohmann::json::array();
  for (const Stone& st : env.stones) {
    stones.push_back({{"id", st.id.index},
                      {"center", {st.center.x(), st.center.y(), st.center.z()}},
                      {"half_extent", {st.half_extent.x(), st.half_extent.y()}},
                      {"cell", {st.cell_x, st.cell_y}}});
  }
  return {{"seed", env.seed},
          {"grid", {env.config.cols, env.config.rows}},
          {"spacing", {env.config.spacing_x, env.config.spacing_y}},
          {"side", env.config.side},
          {"n_removed", env.config.n_removed},
          {"n_effectors", env.n_effectors},
          {"units", "m"},
          {"stones", stones},
          {"start", state_to_json(env.start)},
          {"goal", state_to_json(env.goal)}};
}

inline Environment environment_from_json(const nlohmann::json& j) {
  Environment env;
  try {
    env.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("grid")) {
      env.config.cols = j.at("grid").at(0).get<int>();
      env.config.rows = j.at("grid").at(1).get<int>();
    }
    if (j.contains("spacing")) {
      env.config.spacing_x = j.at("spacing").at(0).get<double>();
      env.config.spacing_y = j.at("spacing").at(1).get<double>();
    }
    env.config.side = j.value("side", env.config.side);
    env.config.n_removed = j.value("n_removed", env.config.n_removed);
    env.n_effectors = j.value("n_effectors", 4);
    env.config.n_effectors = env.n_effectors;
    for (const auto& sj : j.at("stones")) {
      Stone st;
      st.id = StoneId{sj.at("id").get<int>()};
      const auto& c = sj.at("center");
      st.center = Vec3(c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>());
      const auto& h = sj.at("half_extent");
      st.half_extent = Vec2(h.at(0).get<double>(), h.at(1).get<double>());
      if (sj.contains("cell")) {
        st.cell_x = sj.at("cell").at(0).get<int>();
        st.cell_y = sj.at("cell").at(1).get<int>();
      }
      env.stones.push_back(st);
    }
    env.start = state_from_json(j.at("start"));
    env.goal = state_from_json(j.at("goal"));
  } catch (const nlohmann::json::exception& e) {
    throw EnvironmentError(std::string("malformed environment JSON: ") + e.what());
  }
  finalize_environment(env);
  return env;
}

inline void save_environment(const Environment& env, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw EnvironmentError("cannot write " + path);
  out << environment_to_json(env).dump(2) << '\n';
}

inline Environment load_environment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EnvironmentError("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw EnvironmentError(path + ": " + e.what());
  }
  return environment_from_json(j);
}

}  // namespace stepstone
