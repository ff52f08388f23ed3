#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "stepstone/nn/features.hpp"
#include "stepstone/nn/loss.hpp"
#include "stepstone/nn/mlp.hpp"
#include "stepstone/nn/train.hpp"

namespace stepstone::nn {

class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Feasibility classifier: standardized features -> MLP -> success logit.
struct FeasibilityClassifier {
  Mlp net;
  Standardizer input_norm;

  static FeasibilityClassifier create(int n_effectors, int hidden, int layers, Rng& rng) {
    std::vector<int> dims{feature_dim(n_effectors)};
    for (int l = 0; l < layers - 1; ++l) dims.push_back(hidden);
    dims.push_back(1);
    return {Mlp::he_initialized(dims, rng), Standardizer::identity(feature_dim(n_effectors))};
  }

  /// Always-feasible stand-in: zero weights and a large positive output bias.
  static FeasibilityClassifier accept_all(int n_effectors, double logit = 20.0) {
    FeasibilityClassifier c{Mlp({feature_dim(n_effectors), 1}), Standardizer::identity(feature_dim(n_effectors))};
    c.net.layers().back().bias.setConstant(logit);
    return c;
  }

  /// One logit per feature column.
  Vector logits(const Matrix& features) const { return net.forward(input_norm.apply(features)).row(0).transpose(); }
};

struct FeasibilityVerdict {
  bool feasible = false;
  double logit = 0.0;
};

/// Feasible iff sigmoid(logit) >= t_feasible.
inline std::vector<FeasibilityVerdict> classify_feasible(const FeasibilityClassifier& model, const Matrix& features,
                                                         double t_feasible) {
  const Vector z = model.logits(features);
  std::vector<FeasibilityVerdict> out(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) out[static_cast<std::size_t>(i)] = {sigmoid(z[i]) >= t_feasible, z[i]};
  return out;
}

/// Joint next-state predictor and target-adjustment network. The residual
/// head regresses achieved - commanded contacts (base frame); the correction
/// to add to a desired target is its negation.
struct TransitionModel {
  TwoHeadNet net;
  int n_effectors = 4;
  Standardizer input_norm;
  Standardizer state_norm;
  Standardizer residual_norm;

  static TransitionModel create(int n_effectors, int hidden, int layers, Rng& rng) {
    TransitionModel m;
    m.n_effectors = n_effectors;
    m.net = TwoHeadNet::he_initialized(feature_dim(n_effectors), hidden, layers, state_dim(n_effectors),
                                       residual_dim(n_effectors), rng);
    m.input_norm = Standardizer::identity(feature_dim(n_effectors));
    m.state_norm = Standardizer::identity(state_dim(n_effectors));
    m.residual_norm = Standardizer::identity(residual_dim(n_effectors));
    return m;
  }

  /// All-zero weights: predicts the identity quaternion, zero joints and zero residual.
  static TransitionModel zero(int n_effectors, int hidden = 8) {
    TransitionModel m;
    m.n_effectors = n_effectors;
    m.net = TwoHeadNet(Mlp({feature_dim(n_effectors), hidden}, Activation::relu),
                       Mlp({hidden, state_dim(n_effectors)}), Mlp({hidden, residual_dim(n_effectors)}));
    m.net.state_head().layers().back().bias[0] = 1.0;
    m.input_norm = Standardizer::identity(feature_dim(n_effectors));
    m.state_norm = Standardizer::identity(state_dim(n_effectors));
    m.residual_norm = Standardizer::identity(residual_dim(n_effectors));
    return m;
  }

  struct Output {
    Matrix states;     // raw-scale encoded reduced states, one column per sample
    Matrix residuals;  // achieved - commanded, base frame, one column per sample
  };

  Output predict(const Matrix& features) const {
    const Matrix z = net.forward(input_norm.apply(features));
    return {state_norm.invert(z.topRows(net.state_dim())), residual_norm.invert(z.bottomRows(net.residual_dim()))};
  }
};

inline ReducedRobotState predict_next_state(const TransitionModel& model, const Vector& features) {
  const auto out = model.predict(features);
  return decode_state(out.states.col(0), model.n_effectors);
}

struct ResidualPrediction {
  PointMatrix correction;  // to add to the commanded targets, base frame
  double delta_res = 0.0;  // sum of per-effector correction norms
};

inline ResidualPrediction residual_from_column(const Eigen::Ref<const Vector>& residual) {
  ResidualPrediction r;
  r.correction = -unflatten(residual);
  r.delta_res = r.correction.rowwise().norm().sum();
  return r;
}

inline ResidualPrediction predict_residual(const TransitionModel& model, const Vector& features) {
  const auto out = model.predict(features);
  return residual_from_column(out.residuals.col(0));
}

// Serialization ---------------------------------------------------------------

namespace detail {

inline nlohmann::json mlp_to_json(const Mlp& net) {
  nlohmann::json weights = nlohmann::json::array(), biases = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));  // row-major
    }
    weights.push_back(w);
    biases.push_back(std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size()));
  }
  return {{"dims", net.dims()},
          {"weights", weights},
          {"biases", biases},
          {"activation", "relu"},
          {"output_activation", to_string(net.output_activation())}};
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
  const auto dims = j.at("dims").get<std::vector<int>>();
  if (j.at("activation").get<std::string>() != "relu") throw ModelFormatError("only ReLU hidden layers are supported");
  Mlp net(dims, activation_from_string(j.value("output_activation", std::string("identity"))));
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (weights.size() != net.layers().size() || biases.size() != net.layers().size()) {
    throw ModelFormatError("layer count does not match dims");
  }
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    auto& layer = net.layers()[l];
    const auto w = weights[l].get<std::vector<double>>();
    const auto b = biases[l].get<std::vector<double>>();
    if (w.size() != static_cast<std::size_t>(layer.weight.size()) || b.size() != static_cast<std::size_t>(layer.bias.size())) {
      throw ModelFormatError("weight count mismatch in layer " + std::to_string(l));
    }
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = w[k++];
    }
    for (std::size_t i = 0; i < b.size(); ++i) layer.bias[static_cast<Eigen::Index>(i)] = b[i];
  }
  return net;
}

inline nlohmann::json norm_to_json(const Standardizer& s) {
  return {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
          {"std", std::vector<double>(s.std.data(), s.std.data() + s.std.size())}};
}

inline Standardizer norm_from_json(const nlohmann::json& j, Eigen::Index expected) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto sd = j.at("std").get<std::vector<double>>();
  if (mean.size() != static_cast<std::size_t>(expected) || sd.size() != mean.size()) {
    throw ModelFormatError("normalization vector length mismatch");
  }
  return {Eigen::Map<const Vector>(mean.data(), expected), Eigen::Map<const Vector>(sd.data(), expected)};
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelFormatError("cannot read model file " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError("corrupt model file " + path + ": " + e.what());
  }
}

inline void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump() << '\n';
}

}  // namespace detail

inline nlohmann::json to_json(const FeasibilityClassifier& m) {
  nlohmann::json j = detail::mlp_to_json(m.net);
  j["kind"] = "classifier";
  j["feature_norm"] = detail::norm_to_json(m.input_norm);
  return j;
}

inline FeasibilityClassifier classifier_from_json(const nlohmann::json& j) {
  try {
    if (j.value("kind", std::string("classifier")) != "classifier") throw ModelFormatError("not a classifier model");
    FeasibilityClassifier m;
    m.net = detail::mlp_from_json(j);
    if (m.net.output_dim() != 1) throw ModelFormatError("classifier must have one output");
    m.input_norm = detail::norm_from_json(j.at("feature_norm"), m.net.input_dim());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("corrupt classifier: ") + e.what());
  } catch (const ShapeError& e) {
    throw ModelFormatError(std::string("corrupt classifier: ") + e.what());
  }
}

inline nlohmann::json to_json(const TransitionModel& m) {
  return {{"kind", "two_head"},
          {"n_effectors", m.n_effectors},
          {"body", detail::mlp_to_json(m.net.body())},
          {"state_head", detail::mlp_to_json(m.net.state_head())},
          {"residual_head", detail::mlp_to_json(m.net.residual_head())},
          {"activation", "relu"},
          {"feature_norm", detail::norm_to_json(m.input_norm)},
          {"state_norm", detail::norm_to_json(m.state_norm)},
          {"residual_norm", detail::norm_to_json(m.residual_norm)}};
}

inline TransitionModel transition_model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind").get<std::string>() != "two_head") throw ModelFormatError("not a two-head model");
    TransitionModel m;
    m.n_effectors = j.at("n_effectors").get<int>();
    m.net = TwoHeadNet(detail::mlp_from_json(j.at("body")), detail::mlp_from_json(j.at("state_head")),
                       detail::mlp_from_json(j.at("residual_head")));
    if (m.net.input_dim() != feature_dim(m.n_effectors) || m.net.state_dim() != state_dim(m.n_effectors) ||
        m.net.residual_dim() != residual_dim(m.n_effectors)) {
      throw ModelFormatError("two-head dims do not match n_effectors");
    }
    m.input_norm = detail::norm_from_json(j.at("feature_norm"), m.net.input_dim());
    m.state_norm = detail::norm_from_json(j.at("state_norm"), m.net.state_dim());
    m.residual_norm = detail::norm_from_json(j.at("residual_norm"), m.net.residual_dim());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("corrupt two-head model: ") + e.what());
  } catch (const ShapeError& e) {
    throw ModelFormatError(std::string("corrupt two-head model: ") + e.what());
  }
}

inline void save_model(const FeasibilityClassifier& m, const std::string& path) { detail::write_json_file(to_json(m), path); }
inline void save_model(const TransitionModel& m, const std::string& path) { detail::write_json_file(to_json(m), path); }

inline FeasibilityClassifier load_classifier(const std::string& path) {
  return classifier_from_json(detail::read_json_file(path));
}

inline TransitionModel load_transition_model(const std::string& path) {
  return transition_model_from_json(detail::read_json_file(path));
}

}  // namespace stepstone::nn
