#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "json.hpp"

#include "stepstone/dataset.hpp"
#include "stepstone/metrics.hpp"
#include "stepstone/nn/models.hpp"
#include "stepstone/nn/train.hpp"

namespace stepstone {

struct NetworkShape {
  int hidden = 64;
  int layers = 4;  // weight matrices
};

inline NetworkShape classifier_shape() { return {64, 4}; }
inline NetworkShape transition_shape() { return {128, 3}; }

struct TrainReport {
  std::vector<nn::EpochMetrics> history;
  double val_auc = std::numeric_limits<double>::quiet_NaN();
  double val_accuracy = std::numeric_limits<double>::quiet_NaN();
  double val_mse = std::numeric_limits<double>::quiet_NaN();        // standardized targets
  double val_state_mse = std::numeric_limits<double>::quiet_NaN();  // raw units
  double val_residual_mse = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_train = 0;
  std::size_t n_val = 0;
};

inline nlohmann::json to_json(const TrainReport& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& m : r.history) {
    epochs.push_back({{"epoch", m.epoch}, {"lr", m.learning_rate}, {"train_loss", num(m.train_loss)}, {"val_loss", num(m.val_loss)}});
  }
  return {{"epochs", epochs},
          {"val_roc_auc", num(r.val_auc)},
          {"val_accuracy", num(r.val_accuracy)},
          {"val_mse", num(r.val_mse)},
          {"val_state_mse", num(r.val_state_mse)},
          {"val_residual_mse", num(r.val_residual_mse)},
          {"n_train", r.n_train},
          {"n_val", r.n_val}};
}

namespace detail {

// Augmentation variance is given in raw input units.
inline nn::Vector noise_in_standard_units(const nn::Standardizer& s, double sigma_sq) {
  return (std::sqrt(sigma_sq) / s.std.array()).matrix();
}

}  // namespace detail

inline nn::FeasibilityClassifier train_classifier(const std::vector<TransitionRecord>& train,
                                                  const std::vector<TransitionRecord>& val, nn::TrainConfig config,
                                                  TrainReport* report = nullptr, NetworkShape shape = classifier_shape()) {
  config.loss = nn::LossKind::bce_with_logits;
  const auto [x, y] = classifier_samples(train);
  const int n_e = static_cast<int>(train.front().e_cur.rows());
  Rng init(derive_seed(config.seed, {1}));
  auto model = nn::FeasibilityClassifier::create(n_e, shape.hidden, shape.layers, init);
  model.input_norm = nn::Standardizer::fit(x);
  const nn::Matrix xs = model.input_norm.apply(x);

  TrainReport rep;
  rep.n_train = train.size();
  if (!val.empty()) {
    const auto [xv, yv] = classifier_samples(val);
    const nn::Matrix xvs = model.input_norm.apply(xv);
    rep.history = nn::fit(model.net, xs, y, config, detail::noise_in_standard_units(model.input_norm, config.sigma_aug_sq), &xvs, &yv);
    const nn::Vector z = model.logits(xv);
    std::vector<double> scores(z.data(), z.data() + z.size());
    std::vector<int> labels;
    for (Eigen::Index i = 0; i < yv.cols(); ++i) labels.push_back(static_cast<int>(yv(0, i)));
    rep.val_auc = roc_auc(scores, labels);
    rep.val_accuracy = accuracy(scores, labels, 0.0);
    rep.n_val = val.size();
  } else {
    rep.history = nn::fit(model.net, xs, y, config, detail::noise_in_standard_units(model.input_norm, config.sigma_aug_sq));
  }
  if (report) *report = std::move(rep);
  return model;
}

inline nn::TransitionModel train_transition_model(const std::vector<TransitionRecord>& train,
                                                  const std::vector<TransitionRecord>& val, nn::TrainConfig config,
                                                  TrainReport* report = nullptr,
                                                  NetworkShape shape = transition_shape()) {
  config.loss = nn::LossKind::mse;
  const auto [x, y] = transition_samples(train);
  const int n_e = static_cast<int>(train.front().e_cur.rows());
  const int sd = nn::state_dim(n_e);
  Rng init(derive_seed(config.seed, {2}));
  auto model = nn::TransitionModel::create(n_e, shape.hidden, shape.layers, init);
  model.input_norm = nn::Standardizer::fit(x);
  // Targets that never vary (e.g. z residuals) should stay pinned to their value.
  model.state_norm = nn::Standardizer::fit(y.topRows(sd), 1e-6);
  model.residual_norm = nn::Standardizer::fit(y.bottomRows(y.rows() - sd), 1e-6);
  auto standardize_targets = [&](const nn::Matrix& t) {
    nn::Matrix out(t.rows(), t.cols());
    out.topRows(sd) = model.state_norm.apply(t.topRows(sd));
    out.bottomRows(t.rows() - sd) = model.residual_norm.apply(t.bottomRows(t.rows() - sd));
    return out;
  };
  const nn::Matrix xs = model.input_norm.apply(x);
  const nn::Matrix ys = standardize_targets(y);
  const nn::Vector noise = detail::noise_in_standard_units(model.input_norm, config.sigma_aug_sq);

  TrainReport rep;
  rep.n_train = static_cast<std::size_t>(x.cols());
  bool have_val = false;
  for (const auto& r : val) have_val = have_val || r.y == 1;
  if (have_val) {
    const auto [xv, yv] = transition_samples(val);
    const nn::Matrix xvs = model.input_norm.apply(xv);
    const nn::Matrix yvs = standardize_targets(yv);
    rep.history = nn::fit(model.net, xs, ys, config, noise, &xvs, &yvs);
    rep.val_mse = nn::dataset_loss(model.net, xvs, yvs, nn::LossKind::mse);
    const auto pred = model.predict(xv);
    rep.val_state_mse = (pred.states - yv.topRows(sd)).array().square().mean();
    rep.val_residual_mse = (pred.residuals - yv.bottomRows(yv.rows() - sd)).array().square().mean();
    rep.n_val = static_cast<std::size_t>(xv.cols());
  } else {
    rep.history = nn::fit(model.net, xs, ys, config, noise);
  }
  if (report) *report = std::move(rep);
  return model;
}

}  // namespace stepstone
