#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "stepstone/nn/loss.hpp"
#include "stepstone/nn/mlp.hpp"
#include "stepstone/random.hpp"

namespace stepstone::nn {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int batch_size = 512;
  double lr0 = 1e-3;
  double lr_decay = 0.98;  // per epoch
  double sigma_aug_sq = 1e-4;
  int epochs = 40;
  LossKind loss = LossKind::mse;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr0 > 0.0)) throw std::invalid_argument("lr0 must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("lr_decay must be in (0, 1]");
    if (!(sigma_aug_sq >= 0.0)) throw std::invalid_argument("sigma_aug_sq must be non-negative");
    if (batch_size < 1 || epochs < 0) throw std::invalid_argument("batch_size and epochs must be positive");
  }
};

struct EpochMetrics {
  int epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
};

/// Per-feature affine standardization, stored alongside a model.
struct Standardizer {
  Vector mean;
  Vector std;

  static Standardizer identity(Eigen::Index n) { return {Vector::Zero(n), Vector::Ones(n)}; }

  // Constant rows get `degenerate_scale` instead of a vanishing std.
  static Standardizer fit(const Matrix& samples, double degenerate_scale = 1.0) {
    Standardizer s;
    const double n = static_cast<double>(samples.cols());
    s.mean = samples.rowwise().mean();
    s.std = ((samples.colwise() - s.mean).array().square().rowwise().sum() / n).sqrt().matrix();
    for (Eigen::Index i = 0; i < s.std.size(); ++i) {
      if (!(s.std[i] > 1e-8)) s.std[i] = degenerate_scale;
    }
    return s;
  }

  Eigen::Index size() const { return mean.size(); }
  Matrix apply(const Matrix& x) const { return (x.colwise() - mean).array().colwise() / std.array(); }
  Matrix invert(const Matrix& z) const { return (z.array().colwise() * std.array()).matrix().colwise() + mean; }
};

/// Adam with bias correction.
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<ParamView>& params, const std::vector<ParamView>& grads, double lr) {
    if (params.size() != grads.size()) throw ShapeError("parameter/gradient block count mismatch");
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(Vector::Zero(p.size));
        v_.push_back(Vector::Zero(p.size));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t b = 0; b < params.size(); ++b) {
      Eigen::Map<Vector> p(params[b].data, params[b].size);
      Eigen::Map<const Vector> g(grads[b].data, grads[b].size);
      m_[b] = beta1_ * m_[b] + (1.0 - beta1_) * g;
      v_[b] = beta2_ * v_[b] + (1.0 - beta2_) * g.cwiseAbs2();
      p.array() -= lr * (m_[b].array() / c1) / ((v_[b].array() / c2).sqrt() + eps_);
    }
  }

  std::int64_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Vector> m_, v_;
};

template <class Net>
double compute_gradients(const Net& net, const Matrix& x, const Matrix& y, LossKind loss,
                         typename Net::Gradients& grads) {
  typename Net::Trace trace;
  const Matrix out = net.forward(x, trace);
  const LossValue lv = evaluate_loss(loss, out, y);
  net.backward(trace, lv.grad, grads);
  return lv.value;
}

template <class Net>
double dataset_loss(const Net& net, const Matrix& x, const Matrix& y, LossKind loss, Eigen::Index chunk = 4096) {
  double total = 0.0;
  for (Eigen::Index start = 0; start < x.cols(); start += chunk) {
    const Eigen::Index n = std::min(chunk, x.cols() - start);
    total += evaluate_loss(loss, net.forward(x.middleCols(start, n)), y.middleCols(start, n)).value * static_cast<double>(n);
  }
  return total / static_cast<double>(x.cols());
}

/// Mini-batch Adam on already-standardized inputs. A fresh Gaussian
/// perturbation with per-feature standard deviation `noise_std` (in the
/// standardized space) is drawn for every batch when sigma_aug_sq > 0.
template <class Net>
std::vector<EpochMetrics> fit(Net& net, const Matrix& x, const Matrix& y, const TrainConfig& config,
                              const Vector& noise_std, const Matrix* x_val = nullptr,
                              const Matrix* y_val = nullptr) {
  config.validate();
  if (x.cols() == 0) throw std::invalid_argument("training set is empty");
  if (x.cols() != y.cols()) throw ShapeError("input/target sample count mismatch");
  Rng rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Adam adam;
  auto grads = net.zero_gradients();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.cols()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const bool augment = config.sigma_aug_sq > 0.0;

  std::vector<EpochMetrics> history;
  Matrix xb, yb;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.lr0 * std::pow(config.lr_decay, static_cast<double>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t n = std::min(order.size() - start, static_cast<std::size_t>(config.batch_size));
      xb.resize(x.rows(), static_cast<Eigen::Index>(n));
      yb.resize(y.rows(), static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) {
        xb.col(static_cast<Eigen::Index>(i)) = x.col(order[start + i]);
        yb.col(static_cast<Eigen::Index>(i)) = y.col(order[start + i]);
      }
      if (augment) {
        for (Eigen::Index c = 0; c < xb.cols(); ++c) {
          for (Eigen::Index r = 0; r < xb.rows(); ++r) xb(r, c) += noise_std[r] * gauss(rng);
        }
      }
      const double batch_loss = compute_gradients(net, xb, yb, config.loss, grads);
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "non-finite " << to_string(config.loss) << " loss at epoch " << epoch << ", batch starting at sample "
            << start << " (lr " << lr << ")";
        throw TrainingDiverged(msg.str());
      }
      loss_sum += batch_loss * static_cast<double>(n);
      adam.step(net.parameter_views(), grads.views(), lr);
    }
    if (!net.all_finite()) throw TrainingDiverged("parameters became non-finite at epoch " + std::to_string(epoch));
    EpochMetrics m;
    m.epoch = epoch;
    m.learning_rate = lr;
    m.train_loss = loss_sum / static_cast<double>(order.size());
    if (x_val != nullptr && y_val != nullptr && x_val->cols() > 0) m.val_loss = dataset_loss(net, *x_val, *y_val, config.loss);
    history.push_back(m);
  }
  return history;
}

}  // namespace stepstone::nn
