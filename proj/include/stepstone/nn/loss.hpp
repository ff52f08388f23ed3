#pragma once

#include <cmath>
#include <string>

#include "stepstone/nn/mlp.hpp"

namespace stepstone::nn {

enum class LossKind { bce_with_logits, mse };

inline const char* to_string(LossKind k) { return k == LossKind::mse ? "mse" : "bce_with_logits"; }

struct LossValue {
  double value = 0.0;
  Matrix grad;  // d(value)/d(prediction)
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Mean binary cross-entropy on raw logits; per-element gradient (sigma(z) - y) / count.
inline LossValue bce_with_logits(const Matrix& logits, const Matrix& labels) {
  if (logits.rows() != labels.rows() || logits.cols() != labels.cols()) throw ShapeError("BCE shape mismatch");
  const double count = static_cast<double>(logits.size());
  LossValue out{0.0, Matrix(logits.rows(), logits.cols())};
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double z = logits.data()[i], y = labels.data()[i];
    out.value += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    out.grad.data()[i] = (sigmoid(z) - y) / count;
  }
  out.value /= count;
  return out;
}

/// Mean over all elements of the squared error.
inline LossValue mse(const Matrix& prediction, const Matrix& target) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) throw ShapeError("MSE shape mismatch");
  const double count = static_cast<double>(prediction.size());
  const Matrix diff = prediction - target;
  return {diff.squaredNorm() / count, (2.0 / count) * diff};
}

inline LossValue evaluate_loss(LossKind kind, const Matrix& prediction, const Matrix& target) {
  return kind == LossKind::mse ? mse(prediction, target) : bce_with_logits(prediction, target);
}

}  // namespace stepstone::nn
