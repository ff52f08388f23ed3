#pragma once

#include <cmath>
#include <stdexcept>

#include "stepstone/env.hpp"

namespace stepstone {

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct HeuristicWeights {
  double alpha = 0.0;
  double beta = 0.0;

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw std::invalid_argument("heuristic weights must be non-negative");
  }
};

/// Goal proximity: sigma(5 * mean_j (1 - |C_s[j] - C_goal[j]| / d_max)).
inline double h_goal(const PointMatrix& contacts, const PointMatrix& goal_contacts, double d_max_map) {
  if (!(d_max_map > 0.0)) throw std::invalid_argument("d_max_map must be positive");
  if (contacts.rows() != goal_contacts.rows() || contacts.rows() == 0) throw std::invalid_argument("h_goal: size mismatch");
  const double inner = (1.0 - (contacts - goal_contacts).rowwise().norm().array() / d_max_map).mean();
  return logistic(5.0 * inner);
}

inline double h_goal(const ContactState& s, const ContactState& goal, const Environment& env) {
  return h_goal(contact_locations(env, s), contact_locations(env, goal), env.d_max_map);
}

/// Classifier confidence from the raw logit.
inline double h_safety(double logit) { return logistic(logit / 5.0); }

/// Small predicted corrections score close to 1.
inline double h_accuracy(double delta_res) {
  if (!(delta_res >= 0.0)) throw std::invalid_argument("delta_res must be non-negative");
  return logistic(1.0 / (5.0 * (delta_res + 1e-12)));
}

inline double combined_h(double goal, double safety, double accuracy, const HeuristicWeights& w) {
  return goal + w.alpha * safety + w.beta * accuracy;
}

}  // namespace stepstone
