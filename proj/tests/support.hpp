#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "stepstone/nn/mlp.hpp"
#include "stepstone/nn/models.hpp"
#include "stepstone/nn/train.hpp"

namespace stepstone::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  int checked = 0;
  int skipped_at_kink = 0;
};

inline std::vector<bool> relu_pattern(const nn::Mlp& net, const nn::ForwardTrace& t) {
  std::vector<bool> out;
  const std::size_t hidden = net.output_activation() == nn::Activation::relu ? t.pre.size() : t.pre.size() - 1;
  for (std::size_t l = 0; l < hidden; ++l) {
    for (Eigen::Index i = 0; i < t.pre[l].size(); ++i) out.push_back(t.pre[l].data()[i] > 0.0);
  }
  return out;
}

inline std::vector<bool> relu_pattern(const nn::TwoHeadNet& net, const nn::TwoHeadNet::Trace& t) {
  return relu_pattern(net.body(), t.body);
}

/// Central differences against backprop. Every bias and up to
/// `weights_per_block` entries of each weight block are checked; a parameter
/// whose perturbation flips a ReLU is skipped because the derivative does not
/// exist there. Relative error is |a - n| / max(|a| + |n|, floor).
template <class Net>
GradCheck finite_difference_check(Net& net, const nn::Matrix& x, const nn::Matrix& y, nn::LossKind loss, Rng& rng,
                                  int weights_per_block = 400, double eps = 1e-5, double floor = 1e-6) {
  auto grads = net.zero_gradients();
  nn::compute_gradients(net, x, y, loss, grads);
  auto params = net.parameter_views();
  const auto gviews = grads.views();
  GradCheck out;
  for (std::size_t b = 0; b < params.size(); ++b) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(params[b].size));
    for (Eigen::Index i = 0; i < params[b].size; ++i) idx[static_cast<std::size_t>(i)] = i;
    const bool is_weight = b % 2 == 0;
    if (is_weight && static_cast<int>(idx.size()) > weights_per_block) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(static_cast<std::size_t>(weights_per_block));
    }
    for (Eigen::Index i : idx) {
      double& p = params[b].data[i];
      const double saved = p;
      typename Net::Trace tp, tm;
      p = saved + eps;
      const double lp = nn::evaluate_loss(loss, net.forward(x, tp), y).value;
      p = saved - eps;
      const double lm = nn::evaluate_loss(loss, net.forward(x, tm), y).value;
      p = saved;
      if (relu_pattern(net, tp) != relu_pattern(net, tm)) {
        ++out.skipped_at_kink;
        continue;
      }
      const double numeric = (lp - lm) / (2.0 * eps);
      const double analytic = gviews[b].data[i];
      const double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
      out.max_rel_error = std::max(out.max_rel_error, rel);
      ++out.checked;
    }
  }
  return out;
}

inline nn::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, lo, hi);
  return m;
}

inline nn::Matrix random_labels(Eigen::Index cols, Rng& rng) {
  nn::Matrix m(1, cols);
  for (Eigen::Index i = 0; i < cols; ++i) m(0, i) = uniform(rng, 0.0, 1.0) < 0.5 ? 0.0 : 1.0;
  return m;
}

/// Two-head model that inverts a noiseless k1-biased controller exactly
/// (k2 = 0): the achieved-minus-commanded residual is g * (desired - current)
/// in xy with g = k1 / (1 + k1), written with ReLU pairs.
inline nn::TransitionModel exact_adjuster(double k1, int n_effectors = 4) {
  const int sd = nn::state_dim(n_effectors);
  const int hidden = 4 * n_effectors;
  nn::Mlp body({nn::feature_dim(n_effectors), hidden}, nn::Activation::relu);
  nn::Mlp state({hidden, sd});
  nn::Mlp residual({hidden, nn::residual_dim(n_effectors)});
  state.layers()[0].bias[0] = 1.0;
  const double g = k1 / (1.0 + k1);
  for (int j = 0; j < n_effectors; ++j) {
    for (int a = 0; a < 2; ++a) {
      const int cur = sd + 3 * j + a, next = sd + 3 * n_effectors + 3 * j + a;
      const int up = 2 * (2 * j + a), down = up + 1;
      body.layers()[0].weight(up, next) = 1.0;
      body.layers()[0].weight(up, cur) = -1.0;
      body.layers()[0].weight(down, next) = -1.0;
      body.layers()[0].weight(down, cur) = 1.0;
      residual.layers()[0].weight(3 * j + a, up) = g;
      residual.layers()[0].weight(3 * j + a, down) = -g;
    }
  }
  nn::TransitionModel m;
  m.n_effectors = n_effectors;
  m.net = nn::TwoHeadNet(std::move(body), std::move(state), std::move(residual));
  m.input_norm = nn::Standardizer::identity(nn::feature_dim(n_effectors));
  m.state_norm = nn::Standardizer::identity(sd);
  m.residual_norm = nn::Standardizer::identity(nn::residual_dim(n_effectors));
  return m;
}

}  // namespace stepstone::testing
