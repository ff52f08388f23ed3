#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stepstone/random.hpp"

namespace stepstone::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Activation { relu, identity };

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/// Flat view of one parameter (or gradient) block.
struct ParamView {
  double* data;
  Eigen::Index size;
};

struct MlpGradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  std::vector<ParamView> views() {
    std::vector<ParamView> out;
    for (std::size_t l = 0; l < weight.size(); ++l) {
      out.push_back({weight[l].data(), weight[l].size()});
      out.push_back({bias[l].data(), bias[l].size()});
    }
    return out;
  }
};

struct ForwardTrace {
  std::vector<Matrix> inputs;  // input of each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
  Matrix output;
};

/// Fully connected network, samples stored as columns. Hidden layers use
/// ReLU; the output activation is configurable (identity for heads, ReLU for
/// a shared body).
class Mlp {
 public:
  using Trace = ForwardTrace;
  using Gradients = MlpGradients;

  Mlp() = default;

  explicit Mlp(std::vector<int> dims, Activation output_activation = Activation::identity)
      : dims_(std::move(dims)), output_activation_(output_activation) {
    if (dims_.size() < 2) throw ShapeError("an MLP needs at least input and output dims");
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      if (dims_[l] <= 0 || dims_[l + 1] <= 0) throw ShapeError("layer dims must be positive");
      layers_.push_back({Matrix::Zero(dims_[l + 1], dims_[l]), Vector::Zero(dims_[l + 1])});
    }
  }

  // He-uniform weights, zero biases.
  static Mlp he_initialized(std::vector<int> dims, Rng& rng, Activation output_activation = Activation::identity) {
    Mlp net(std::move(dims), output_activation);
    for (auto& layer : net.layers_) {
      const double bound = std::sqrt(6.0 / static_cast<double>(layer.weight.cols()));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = u(rng);
    }
    return net;
  }

  const std::vector<int>& dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  Activation output_activation() const { return output_activation_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  Matrix forward(const Matrix& x) const {
    check_input(x);
    Matrix h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix z = layers_[l].weight * h;
      z.colwise() += layers_[l].bias;
      if (activation_of(l) == Activation::relu) z = z.cwiseMax(0.0);
      h = std::move(z);
    }
    return h;
  }

  Matrix forward(const Matrix& x, ForwardTrace& trace) const {
    check_input(x);
    trace.inputs.resize(layers_.size());
    trace.pre.resize(layers_.size());
    Matrix h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      trace.inputs[l] = h;
      Matrix z = layers_[l].weight * h;
      z.colwise() += layers_[l].bias;
      trace.pre[l] = z;
      if (activation_of(l) == Activation::relu) z = z.cwiseMax(0.0);
      h = std::move(z);
    }
    trace.output = h;
    return h;
  }

  MlpGradients zero_gradients() const {
    MlpGradients g;
    for (const auto& l : layers_) {
      g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
      g.bias.push_back(Vector::Zero(l.bias.size()));
    }
    return g;
  }

  /// Back-propagates dL/d(output); overwrites `grads` and returns dL/d(input).
  Matrix backward(const ForwardTrace& trace, const Matrix& grad_output, MlpGradients& grads) const {
    if (grad_output.rows() != output_dim() || grad_output.cols() != trace.output.cols()) {
      throw ShapeError("gradient shape does not match the network output");
    }
    if (grads.weight.size() != layers_.size()) grads = zero_gradients();
    Matrix delta = grad_output;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      if (activation_of(li) == Activation::relu) {
        delta = delta.cwiseProduct((trace.pre[li].array() > 0.0).cast<double>().matrix());
      }
      grads.weight[li].noalias() = delta * trace.inputs[li].transpose();
      grads.bias[li] = delta.rowwise().sum();
      Matrix next = layers_[li].weight.transpose() * delta;
      delta = std::move(next);
    }
    return delta;
  }

  std::vector<ParamView> parameter_views() {
    std::vector<ParamView> out;
    for (auto& l : layers_) {
      out.push_back({l.weight.data(), l.weight.size()});
      out.push_back({l.bias.data(), l.bias.size()});
    }
    return out;
  }

  bool all_finite() const {
    for (const auto& l : layers_) {
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
  }

 private:
  Activation activation_of(std::size_t l) const {
    return l + 1 == layers_.size() ? output_activation_ : Activation::relu;
  }

  void check_input(const Matrix& x) const {
    if (layers_.empty()) throw ShapeError("network has no layers");
    if (x.rows() != input_dim()) {
      throw ShapeError("input width " + std::to_string(x.rows()) + " != " + std::to_string(input_dim()));
    }
  }

  std::vector<int> dims_;
  Activation output_activation_ = Activation::identity;
  std::vector<DenseLayer> layers_;
};

/// Shared body with two linear heads: predicted next state and target residual.
struct TwoHeadGradients {
  MlpGradients body, state, residual;

  std::vector<ParamView> views() {
    auto out = body.views();
    for (auto v : state.views()) out.push_back(v);
    for (auto v : residual.views()) out.push_back(v);
    return out;
  }
};

class TwoHeadNet {
 public:
  struct Trace {
    ForwardTrace body, state, residual;
  };
  using Gradients = TwoHeadGradients;

  TwoHeadNet() = default;
  TwoHeadNet(Mlp body, Mlp state_head, Mlp residual_head)
      : body_(std::move(body)), state_(std::move(state_head)), residual_(std::move(residual_head)) {
    if (body_.output_dim() != state_.input_dim() || body_.output_dim() != residual_.input_dim()) {
      throw ShapeError("head inputs must match the body output");
    }
  }

  // `layers` counts weight matrices along each input-to-head path.
  static TwoHeadNet he_initialized(int input_dim, int hidden, int layers, int state_dim, int residual_dim, Rng& rng) {
    if (layers < 2) throw ShapeError("two-head network needs at least two layers");
    std::vector<int> body_dims{input_dim};
    for (int l = 0; l < layers - 1; ++l) body_dims.push_back(hidden);
    return TwoHeadNet(Mlp::he_initialized(body_dims, rng, Activation::relu),
                      Mlp::he_initialized({hidden, state_dim}, rng), Mlp::he_initialized({hidden, residual_dim}, rng));
  }

  const Mlp& body() const { return body_; }
  const Mlp& state_head() const { return state_; }
  const Mlp& residual_head() const { return residual_; }
  Mlp& body() { return body_; }
  Mlp& state_head() { return state_; }
  Mlp& residual_head() { return residual_; }

  int input_dim() const { return body_.input_dim(); }
  int state_dim() const { return state_.output_dim(); }
  int residual_dim() const { return residual_.output_dim(); }
  int output_dim() const { return state_dim() + residual_dim(); }

  /// Heads stacked row-wise: [state; residual].
  Matrix forward(const Matrix& x) const {
    const Matrix h = body_.forward(x);
    Matrix out(output_dim(), x.cols());
    out.topRows(state_dim()) = state_.forward(h);
    out.bottomRows(residual_dim()) = residual_.forward(h);
    return out;
  }

  Matrix forward(const Matrix& x, Trace& trace) const {
    const Matrix h = body_.forward(x, trace.body);
    Matrix out(output_dim(), x.cols());
    out.topRows(state_dim()) = state_.forward(h, trace.state);
    out.bottomRows(residual_dim()) = residual_.forward(h, trace.residual);
    return out;
  }

  TwoHeadGradients zero_gradients() const {
    return {body_.zero_gradients(), state_.zero_gradients(), residual_.zero_gradients()};
  }

  Matrix backward(const Trace& trace, const Matrix& grad_output, TwoHeadGradients& grads) const {
    if (grad_output.rows() != output_dim()) throw ShapeError("gradient shape does not match the heads");
    Matrix dh = state_.backward(trace.state, grad_output.topRows(state_dim()), grads.state);
    dh += residual_.backward(trace.residual, grad_output.bottomRows(residual_dim()), grads.residual);
    return body_.backward(trace.body, dh, grads.body);
  }

  std::vector<ParamView> parameter_views() {
    auto out = body_.parameter_views();
    for (auto v : state_.parameter_views()) out.push_back(v);
    for (auto v : residual_.parameter_views()) out.push_back(v);
    return out;
  }

  bool all_finite() const { return body_.all_finite() && state_.all_finite() && residual_.all_finite(); }

 private:
  Mlp body_, state_, residual_;
};

}  // namespace stepstone::nn
