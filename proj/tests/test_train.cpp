#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "drn/errors.hpp"
#include "drn/glm.hpp"
#include "drn/train.hpp"

using namespace drn;

namespace {

class ConstantObjective final : public BatchObjective {
 public:
  explicit ConstantObjective(int n, int p, int k)
      : X_(Eigen::MatrixXd::Random(n, p)), k_(k) {}
  const Eigen::MatrixXd& features() const override { return X_; }
  int output_dim() const override { return k_; }
  double value(const Eigen::MatrixXd&, std::span<const int>) const override {
    return 3.14;
  }
  double value_and_grad(const Eigen::MatrixXd&, std::span<const int>,
                        Eigen::MatrixXd& g) const override {
    g.setZero();
    return 3.14;
  }

 private:
  Eigen::MatrixXd X_;
  int k_;
};

// Mean squared error against a fixed scalar target per row.
class RegressionObjective final : public BatchObjective {
 public:
  RegressionObjective(Eigen::MatrixXd X, Eigen::VectorXd y)
      : X_(std::move(X)), y_(std::move(y)) {}
  const Eigen::MatrixXd& features() const override { return X_; }
  int output_dim() const override { return 1; }
  double value(const Eigen::MatrixXd& out, std::span<const int> rows) const override {
    double v = 0.0;
    for (Eigen::Index j = 0; j < out.rows(); ++j) {
      double d = out(j, 0) - y_(rows[static_cast<std::size_t>(j)]);
      v += d * d;
    }
    return v / static_cast<double>(out.rows());
  }
  double value_and_grad(const Eigen::MatrixXd& out, std::span<const int> rows,
                        Eigen::MatrixXd& g) const override {
    for (Eigen::Index j = 0; j < out.rows(); ++j)
      g(j, 0) = 2.0 * (out(j, 0) - y_(rows[static_cast<std::size_t>(j)])) /
                static_cast<double>(out.rows());
    return value(out, rows);
  }

 private:
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
};

bool params_equal(const MlpParams& a, const MlpParams& b) {
  for (std::size_t l = 0; l < a.weights.size(); ++l)
    if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
  return true;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("first adam step with unit gradient") {
  MlpParams p = MlpParams::zeros({1, 1});
  p.weights[0](0, 0) = 0.5;
  Gradients g = Gradients::zeros_like(p);
  g.weights[0](0, 0) = 1.0;
  AdamState s = AdamState::zeros_like(p);
  adam_step(p, g, s, 0.001);
  // Bias-corrected m-hat = v-hat = 1 on the first step.
  CHECK(p.weights[0](0, 0) == doctest::Approx(0.5 - 0.001).epsilon(1e-7));
}

TEST_CASE("zero gradients leave parameters untouched") {
  MlpParams p = MlpParams::zeros({2, 3, 1});
  p.weights[0].setConstant(0.3);
  MlpParams before = p;
  Gradients g = Gradients::zeros_like(p);
  AdamState s = AdamState::zeros_like(p);
  for (int t = 0; t < 25; ++t) adam_step(p, g, s, 0.01);
  CHECK(params_equal(p, before));
}

TEST_CASE("equal gradients update symmetrically") {
  MlpParams p = MlpParams::zeros({1, 2});
  Gradients g = Gradients::zeros_like(p);
  g.weights[0](0, 0) = 0.7;
  g.weights[0](0, 1) = 0.7;
  AdamState s = AdamState::zeros_like(p);
  for (int t = 0; t < 5; ++t) adam_step(p, g, s, 0.01);
  CHECK(p.weights[0](0, 0) == p.weights[0](0, 1));
}

TEST_CASE("non-finite gradient aborts") {
  MlpParams p = MlpParams::zeros({1, 1});
  Gradients g = Gradients::zeros_like(p);
  g.weights[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  AdamState s = AdamState::zeros_like(p);
  CHECK_THROWS_AS(adam_step(p, g, s, 0.01), NumericalError);
}

TEST_CASE("batch slicing") {
  Rng rng(1);
  auto batches = make_batches(5, 2, rng);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 2);
  CHECK(batches[1].size() == 2);
  CHECK(batches[2].size() == 1);

  std::set<int> seen;
  for (const auto& b : batches) seen.insert(b.begin(), b.end());
  CHECK(seen == std::set<int>{0, 1, 2, 3, 4});

  Rng r1(9), r2(9);
  CHECK(make_batches(100, 16, r1) == make_batches(100, 16, r2));
}

TEST_CASE("constant loss stops after patience+1 epochs with initial weights") {
  ConstantObjective train_obj(40, 2, 1), val_obj(10, 2, 1);
  MlpParams p = MlpParams::zeros({2, 4, 1});
  p.weights[0].setConstant(0.123);
  MlpParams initial = p;

  TrainingConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.batch_size = 8;
  cfg.hidden_layers = 1;
  cfg.neurons_per_layer = 4;
  cfg.patience = 5;
  cfg.max_epochs = 100;
  cfg.seed = 3;

  TrainLog log = train_network(p, train_obj, val_obj, cfg);
  CHECK(log.train_loss.size() == 6);  // patience + 1
  CHECK(log.stop_reason == "early_stop");
  CHECK(log.best_epoch == 1);
  CHECK(params_equal(p, initial));  // zero gradients never moved the weights
}

TEST_CASE("training is deterministic under a fixed seed") {
  Rng data_rng(1010);
  const int n = 200;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = data_rng.normal();
    X(i, 1) = data_rng.normal();
    y(i) = 0.5 * X(i, 0) - 0.3 * X(i, 1) + 0.1 * data_rng.normal();
  }
  RegressionObjective train_obj(X.topRows(150), y.head(150));
  RegressionObjective val_obj(X.bottomRows(50), y.tail(50));

  TrainingConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.batch_size = 32;
  cfg.dropout_rate = 0.1;
  cfg.hidden_layers = 1;
  cfg.neurons_per_layer = 8;
  cfg.patience = 10;
  cfg.max_epochs = 30;
  cfg.seed = 99;

  auto run = [&]() {
    Rng init(cfg.seed);
    MlpParams p = MlpParams::init(2, 1, 8, 1, init);
    TrainLog log = train_network(p, train_obj, val_obj, cfg);
    return std::pair{p, log};
  };
  auto [p1, log1] = run();
  auto [p2, log2] = run();
  CHECK(params_equal(p1, p2));
  CHECK(log1.train_loss == log2.train_loss);
  CHECK(log1.val_loss == log2.val_loss);
  CHECK(log1.best_epoch == log2.best_epoch);
}

TEST_CASE("returned weights score the best logged validation loss") {
  Rng data_rng(77);
  const int n = 120;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = data_rng.normal();
    X(i, 1) = data_rng.normal();
    y(i) = std::sin(X(i, 0)) + 0.2 * data_rng.normal();
  }
  RegressionObjective train_obj(X.topRows(90), y.head(90));
  RegressionObjective val_obj(X.bottomRows(30), y.tail(30));

  TrainingConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.batch_size = 16;
  cfg.hidden_layers = 1;
  cfg.neurons_per_layer = 6;
  cfg.patience = 8;
  cfg.max_epochs = 40;
  cfg.seed = 5;

  Rng init(cfg.seed);
  MlpParams p = MlpParams::init(2, 1, 6, 1, init);
  TrainLog log = train_network(p, train_obj, val_obj, cfg);

  double final_val = objective_value(p, val_obj);
  CHECK(final_val == doctest::Approx(log.best_val()).epsilon(1e-12));
  for (double v : log.val_loss) CHECK(final_val <= v + 1e-12);
}

TEST_CASE("training loss decreases over the first epochs on a learnable task") {
  Rng data_rng(2025);
  const int n = 400;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = data_rng.normal();
    X(i, 1) = data_rng.normal();
    y(i) = X(i, 0) - 2.0 * X(i, 1);
  }
  RegressionObjective train_obj(X.topRows(300), y.head(300));
  RegressionObjective val_obj(X.bottomRows(100), y.tail(100));

  TrainingConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.batch_size = 32;
  cfg.hidden_layers = 1;
  cfg.neurons_per_layer = 16;
  cfg.patience = 30;
  cfg.max_epochs = 5;
  cfg.seed = 21;

  Rng init(cfg.seed);
  MlpParams p = MlpParams::init(2, 1, 16, 1, init);
  TrainLog log = train_network(p, train_obj, val_obj, cfg);
  REQUIRE(log.train_loss.size() == 5);
  CHECK(log.train_loss.back() < log.train_loss.front());
}

TEST_CASE("config validation") {
  TrainingConfig cfg;
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = TrainingConfig{};
  cfg.dropout_rate = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = TrainingConfig{};
  cfg.penalty_weights.kl = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

}  // TEST_SUITE
