#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "stepstone/learning.hpp"
#include "stepstone/metrics.hpp"
#include "stepstone/nn/models.hpp"
#include "support.hpp"

using namespace stepstone;
using namespace stepstone::nn;
using stepstone::testing::finite_difference_check;
using stepstone::testing::random_labels;
using stepstone::testing::random_matrix;

namespace {

std::filesystem::path temp_file(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

Mlp random_mlp(std::vector<int> dims, Rng& rng) {
  Mlp net = Mlp::he_initialized(std::move(dims), rng);
  for (auto& l : net.layers()) {
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = uniform(rng, -0.1, 0.1);
  }
  return net;
}

}  // namespace

TEST(Mlp, ZeroParametersGiveZeroOutput) {
  Mlp net({5, 7, 3});
  Rng rng(1);
  EXPECT_EQ(net.forward(random_matrix(5, 4, rng)), Matrix::Zero(3, 4));
}

TEST(Mlp, IdentityLinearLayerPassesInputThrough) {
  Mlp net({3, 3});
  net.layers()[0].weight = Matrix::Identity(3, 3);
  Rng rng(2);
  const Matrix x = random_matrix(3, 6, rng);
  EXPECT_EQ(net.forward(x), x);
}

TEST(Mlp, MatchesHandMatrixProducts) {
  Rng rng(3);
  const Mlp net = random_mlp({4, 6, 2}, rng);
  const Matrix x = random_matrix(4, 5, rng);
  const auto& l = net.layers();
  Matrix h(6, 5), out(2, 5);
  for (int c = 0; c < 5; ++c) {
    for (int i = 0; i < 6; ++i) {
      double z = l[0].bias[i];
      for (int k = 0; k < 4; ++k) z += l[0].weight(i, k) * x(k, c);
      h(i, c) = z > 0.0 ? z : 0.0;
    }
    for (int i = 0; i < 2; ++i) {
      double z = l[1].bias[i];
      for (int k = 0; k < 6; ++k) z += l[1].weight(i, k) * h(k, c);
      out(i, c) = z;
    }
  }
  EXPECT_LT((net.forward(x) - out).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Mlp, RejectsWrongInputWidth) {
  Mlp net({3, 2});
  EXPECT_THROW(net.forward(Matrix::Zero(4, 1)), ShapeError);
  EXPECT_THROW(Mlp({3}), ShapeError);
}

TEST(Gradients, ZeroErrorRegressionHasZeroGradient) {
  Rng rng(4);
  Mlp net = random_mlp({3, 8, 2}, rng);
  const Matrix x = random_matrix(3, 10, rng);
  const Matrix y = net.forward(x);
  auto g = net.zero_gradients();
  compute_gradients(net, x, y, LossKind::mse, g);
  for (const auto& w : g.weight) EXPECT_EQ(w.cwiseAbs().maxCoeff(), 0.0);
  for (const auto& b : g.bias) EXPECT_EQ(b.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Gradients, BceAtZeroLogitWithPositiveLabel) {
  Mlp net({2, 1});  // zero weights: logit 0
  const Matrix x = Matrix::Ones(2, 1);
  auto g = net.zero_gradients();
  const double loss = compute_gradients(net, x, Matrix::Ones(1, 1), LossKind::bce_with_logits, g);
  EXPECT_NEAR(loss, std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(g.bias[0][0], -0.5);
  EXPECT_DOUBLE_EQ(g.weight[0](0, 0), -0.5);
}

TEST(Gradients, HandComputedLosses) {
  Matrix p(1, 2), t(1, 2);
  p << 1.0, -2.0;
  t << 0.5, 0.0;
  const auto m = mse(p, t);
  EXPECT_DOUBLE_EQ(m.value, (0.25 + 4.0) / 2.0);
  EXPECT_DOUBLE_EQ(m.grad(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(m.grad(0, 1), -2.0);

  Matrix z(1, 2), y(1, 2);
  z << 2.0, -1.0;
  y << 1.0, 0.0;
  const auto b = bce_with_logits(z, y);
  const double expected = 0.5 * (-std::log(1.0 / (1.0 + std::exp(-2.0))) - std::log(1.0 - 1.0 / (1.0 + std::exp(1.0))));
  EXPECT_NEAR(b.value, expected, 1e-14);
  EXPECT_NEAR(b.grad(0, 0), 0.5 * (sigmoid(2.0) - 1.0), 1e-15);
  // Stable at extreme logits.
  Matrix big(1, 1);
  big << 800.0;
  EXPECT_TRUE(std::isfinite(bce_with_logits(big, Matrix::Zero(1, 1)).value));
}

TEST(Gradients, FiniteDifferencesOnSmallNets) {
  Rng rng(5);
  for (LossKind loss : {LossKind::mse, LossKind::bce_with_logits}) {
    for (int layers : {3, 4}) {
      std::vector<int> dims{6};
      for (int l = 0; l < layers - 1; ++l) dims.push_back(16);
      dims.push_back(loss == LossKind::mse ? 3 : 1);
      Mlp net = random_mlp(dims, rng);
      const Matrix x = random_matrix(6, 5, rng);
      const Matrix y = loss == LossKind::mse ? random_matrix(3, 5, rng) : random_labels(5, rng);
      const auto r = finite_difference_check(net, x, y, loss, rng);
      EXPECT_LT(r.max_rel_error, 1e-4) << to_string(loss) << " layers " << layers;
      EXPECT_GT(r.checked, 100);
    }
  }
}

TEST(Gradients, FiniteDifferencesOnTwoHeadNet) {
  Rng rng(6);
  TwoHeadNet net = TwoHeadNet::he_initialized(8, 12, 3, 5, 4, rng);
  const Matrix x = random_matrix(8, 6, rng);
  const Matrix y = random_matrix(9, 6, rng);
  const auto r = finite_difference_check(net, x, y, LossKind::mse, rng);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Adam, FirstStepMovesEachParameterByLearningRate) {
  // m_hat / sqrt(v_hat) = g / |g| after one step.
  Vector p(3), g(3);
  p << 1.0, -1.0, 0.5;
  g << 0.2, -3.0, 0.0;
  Adam adam;
  adam.step({{p.data(), 3}}, {{g.data(), 3}}, 0.01);
  EXPECT_NEAR(p[0], 1.0 - 0.01 * 0.2 / (0.2 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], -1.0 + 0.01 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_EQ(p[2], 0.5);

  // Second step by hand.
  Vector g2(3);
  g2 << 0.1, 1.0, 0.0;
  const double m = 0.9 * (0.1 * 0.2) + 0.1 * 0.1;
  const double v = 0.999 * (0.001 * 0.04) + 0.001 * 0.01;
  const double expected = p[0] - 0.01 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  adam.step({{p.data(), 3}}, {{g2.data(), 3}}, 0.01);
  EXPECT_NEAR(p[0], expected, 1e-15);
}

TEST(Training, LinearRegressionRecoversSlope) {
  Rng rng(7);
  Matrix x = random_matrix(1, 200, rng);
  Matrix y = 2.0 * x;
  Mlp net({1, 1});
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 8;
  cfg.lr0 = 1e-2;
  cfg.sigma_aug_sq = 0.0;
  fit(net, x, y, cfg, Vector::Zero(1));
  EXPECT_NEAR(net.layers()[0].weight(0, 0), 2.0, 1e-2);
  EXPECT_NEAR(net.layers()[0].bias[0], 0.0, 1e-2);
}

TEST(Training, SameSeedGivesIdenticalParameters) {
  Rng rng(8);
  const Matrix x = random_matrix(4, 64, rng);
  const Matrix y = random_matrix(2, 64, rng);
  Rng init_a(9), init_b(9);
  Mlp a = Mlp::he_initialized({4, 16, 2}, init_a), b = Mlp::he_initialized({4, 16, 2}, init_b);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  cfg.sigma_aug_sq = 0.0;
  const auto ha = fit(a, x, y, cfg, Vector::Zero(4));
  const auto hb = fit(b, x, y, cfg, Vector::Zero(4));
  for (std::size_t l = 0; l < a.layers().size(); ++l) {
    EXPECT_EQ(a.layers()[l].weight, b.layers()[l].weight);
    EXPECT_EQ(a.layers()[l].bias, b.layers()[l].bias);
  }
  for (std::size_t e = 0; e < ha.size(); ++e) EXPECT_EQ(ha[e].train_loss, hb[e].train_loss);
  EXPECT_DOUBLE_EQ(ha[3].learning_rate, 1e-3 * std::pow(0.98, 3));
}

TEST(Training, SmoothedLossIsNonIncreasing) {
  Rng rng(10);
  const Matrix x = random_matrix(3, 40, rng);
  Matrix y(1, 40);
  for (int i = 0; i < 40; ++i) y(0, i) = std::sin(2.0 * x(0, i)) + x(1, i) * x(2, i);
  Rng init(11);
  Mlp net = Mlp::he_initialized({3, 32, 32, 1}, init);
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.batch_size = 40;
  cfg.sigma_aug_sq = 0.0;
  const auto h = fit(net, x, y, cfg, Vector::Zero(3));
  std::vector<double> smooth;
  for (std::size_t e = 0; e + 5 <= h.size(); e += 5) {
    double s = 0.0;
    for (std::size_t k = e; k < e + 5; ++k) s += h[k].train_loss;
    smooth.push_back(s / 5.0);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) EXPECT_LE(smooth[i], smooth[i - 1]);
}

TEST(Training, SeparableBlobsAreClassified) {
  Rng rng(12);
  std::normal_distribution<double> g(0.0, 0.3);
  auto blobs = [&](int n) {
    Matrix x(2, n), y(1, n);
    for (int i = 0; i < n; ++i) {
      const bool pos = i % 2 == 0;
      x(0, i) = (pos ? 1.5 : -1.5) + g(rng);
      x(1, i) = (pos ? 1.0 : -1.0) + g(rng);
      y(0, i) = pos ? 1.0 : 0.0;
    }
    return std::pair{x, y};
  };
  const auto [x, y] = blobs(400);
  const auto [xv, yv] = blobs(200);
  Rng init(13);
  Mlp net = Mlp::he_initialized({2, 16, 1}, init);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 16;
  cfg.lr0 = 1e-2;
  cfg.loss = LossKind::bce_with_logits;
  fit(net, x, y, cfg, Vector::Constant(2, 0.01));
  const Matrix z = net.forward(xv);
  std::vector<double> scores(z.data(), z.data() + z.size());
  std::vector<int> labels;
  for (int i = 0; i < yv.cols(); ++i) labels.push_back(static_cast<int>(yv(0, i)));
  EXPECT_GT(accuracy(scores, labels, 0.0), 0.99);
}

TEST(Training, DivergenceIsReported) {
  Matrix x = Matrix::Ones(1, 4);
  Matrix y = Matrix::Constant(1, 4, 1e300);
  Mlp net({1, 1});
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.sigma_aug_sq = 0.0;
  EXPECT_THROW(fit(net, x, y, cfg, Vector::Zero(1)), TrainingDiverged);
  cfg.lr0 = -1.0;
  EXPECT_THROW(fit(net, x, Matrix::Ones(1, 4), cfg, Vector::Zero(1)), std::invalid_argument);
}

TEST(Standardizer, FitsAndInverts) {
  Matrix x(2, 4);
  x << 1, 2, 3, 4, 5, 5, 5, 5;
  const auto s = Standardizer::fit(x);
  EXPECT_DOUBLE_EQ(s.mean[0], 2.5);
  EXPECT_DOUBLE_EQ(s.std[0], std::sqrt(1.25));
  EXPECT_DOUBLE_EQ(s.std[1], 1.0);
  EXPECT_DOUBLE_EQ(Standardizer::fit(x, 1e-6).std[1], 1e-6);
  EXPECT_LT((s.invert(s.apply(x)) - x).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Metrics, AucMatchesPairwiseCount) {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s;
    std::vector<int> l;
    for (int i = 0; i < 60; ++i) {
      s.push_back(std::round(uniform(rng, 0.0, 10.0)));  // plenty of ties
      l.push_back(uniform(rng, 0.0, 1.0) < 0.4 ? 1 : 0);
    }
    double wins = 0.0, pairs = 0.0;
    for (int i = 0; i < 60; ++i) {
      for (int j = 0; j < 60; ++j) {
        if (l[i] != 1 || l[j] != 0) continue;
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
    EXPECT_NEAR(roc_auc(s, l), wins / pairs, 1e-12);
  }
  const std::vector<double> s{0.1, 0.2};
  const std::vector<int> one_class{1, 1};
  EXPECT_TRUE(std::isnan(roc_auc(s, one_class)));
}

TEST(Models, ClassifierThresholdIsInclusive) {
  auto c = FeasibilityClassifier::accept_all(4, 0.0);
  const Matrix f = Matrix::Zero(feature_dim(4), 1);
  EXPECT_TRUE(classify_feasible(c, f, 0.5)[0].feasible);
  c.net.layers().back().bias.setConstant(-10.0);
  const auto v = classify_feasible(c, f, 0.5)[0];
  EXPECT_FALSE(v.feasible);
  EXPECT_DOUBLE_EQ(v.logit, -10.0);
}

TEST(Models, StateCodecRoundTrip) {
  ReducedRobotState x;
  x.base_quat = yaw_quaternion(0.3);
  x.joints = Eigen::VectorXd::LinSpaced(12, -0.3, 0.3);
  x.base_linvel = Vec3(0.1, 0.2, 0.3);
  x.base_angvel = Vec3(0.0, 0.0, -0.4);
  const Vector v = encode_state(x);
  ASSERT_EQ(v.size(), state_dim(4));
  const auto back = decode_state(v, 4);
  EXPECT_EQ(back.joints, x.joints);
  EXPECT_EQ(back.base_linvel, x.base_linvel);
  EXPECT_EQ(back.base_angvel, x.base_angvel);
  EXPECT_NEAR(back.base_quat.angularDistance(x.base_quat), 0.0, 1e-15);

  Vector raw = Vector::Zero(state_dim(4));
  raw[0] = 2.0;
  EXPECT_EQ(decode_state(raw, 4).base_quat.coeffs(), Quat::Identity().coeffs());
  raw[0] = 0.0;
  EXPECT_THROW(decode_state(raw, 4), StateDecodeError);
}

TEST(Models, ZeroModelPredictsNoResidual) {
  const auto m = TransitionModel::zero(4);
  Rng rng(15);
  const Vector f = random_matrix(feature_dim(4), 1, rng).col(0);
  const auto r = predict_residual(m, f);
  EXPECT_EQ(r.correction, PointMatrix::Zero(4, 3));
  EXPECT_EQ(r.delta_res, 0.0);
  EXPECT_EQ(predict_next_state(m, f).base_quat.coeffs(), Quat::Identity().coeffs());
}

TEST(Models, DeltaResIsSumOfRowNorms) {
  Vector residual = Vector::Zero(12);
  for (int j = 0; j < 4; ++j) residual[3 * j] = 0.01;
  EXPECT_NEAR(residual_from_column(residual).delta_res, 0.04, 1e-15);
}

TEST(Models, SaveLoadRoundTripIsExact) {
  Rng rng(16);
  auto c = FeasibilityClassifier::create(4, 16, 3, rng);
  c.input_norm.mean = random_matrix(feature_dim(4), 1, rng).col(0);
  c.input_norm.std = random_matrix(feature_dim(4), 1, rng, 0.5, 2.0).col(0);
  auto t = TransitionModel::create(4, 16, 3, rng);
  t.residual_norm.std.setConstant(0.01);
  const auto cp = temp_file("stepstone_clf.json"), tp = temp_file("stepstone_tm.json");
  save_model(c, cp.string());
  save_model(t, tp.string());
  const auto c2 = load_classifier(cp.string());
  const auto t2 = load_transition_model(tp.string());
  const Matrix f = random_matrix(feature_dim(4), 100, rng);
  EXPECT_EQ(c.logits(f), c2.logits(f));
  EXPECT_EQ(t.predict(f).states, t2.predict(f).states);
  EXPECT_EQ(t.predict(f).residuals, t2.predict(f).residuals);

  std::string text;
  {
    std::ifstream in(cp);
    std::getline(in, text);
  }
  {
    std::ofstream out(cp);
    out << text.substr(0, text.size() / 2);
  }
  EXPECT_THROW(load_classifier(cp.string()), ModelFormatError);
  auto j = to_json(c);
  j["weights"][0].erase(0);
  EXPECT_THROW(classifier_from_json(j), ModelFormatError);
  EXPECT_THROW(load_transition_model(cp.string()), ModelFormatError);
  EXPECT_THROW(load_classifier("/nonexistent/model.json"), ModelFormatError);
  std::filesystem::remove(cp);
  std::filesystem::remove(tp);
}

TEST(Models, PredictorMemorizesSmallDataset) {
  // Ten distinct records, each duplicated ten times.
  Rng rng(17);
  std::vector<TransitionRecord> records;
  for (int k = 0; k < 10; ++k) {
    TransitionRecord r;
    r.x.base_quat = yaw_quaternion(uniform(rng, -0.2, 0.2));
    r.x.joints = random_matrix(12, 1, rng, -0.1, 0.1).col(0);
    r.e_cur = PointMatrix(random_matrix(4, 3, rng, -0.3, 0.3));
    r.e_tgt = PointMatrix(random_matrix(4, 3, rng, -0.3, 0.3));
    r.e_ach = PointMatrix(r.e_tgt + 0.01 * PointMatrix(random_matrix(4, 3, rng)));
    ReducedRobotState next = r.x;
    next.joints = random_matrix(12, 1, rng, -0.1, 0.1).col(0);
    r.x_next = next;
    r.y = 1;
    for (int d = 0; d < 10; ++d) records.push_back(r);
  }
  TrainConfig cfg;
  cfg.epochs = 400;
  cfg.batch_size = 20;
  cfg.lr_decay = 1.0;
  cfg.sigma_aug_sq = 0.0;
  TrainReport rep;
  train_transition_model(records, records, cfg, &rep, {32, 3});
  EXPECT_LT(rep.val_mse, 1e-3);
  EXPECT_LT(rep.val_state_mse, 1e-6);
}

TEST(Models, ClassifierNeedsLabels) {
  TransitionRecord r;
  r.x.joints = Eigen::VectorXd::Zero(12);
  r.e_cur = PointMatrix::Zero(4, 3);
  r.e_tgt = PointMatrix::Zero(4, 3);
  r.y = 1;
  auto j = record_to_json(r);
  j.erase("y");
  EXPECT_THROW(record_from_json(j), DatasetError);
  r.y = -1;
  EXPECT_THROW(classifier_samples({r}), DatasetError);
}
