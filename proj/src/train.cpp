#include "drn/train.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "drn/errors.hpp"

namespace drn {

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ValidationError("dropout_rate must lie in [0,1)");
  if (hidden_layers < 1) throw ValidationError("hidden_layers must be >= 1");
  if (neurons_per_layer < 1)
    throw ValidationError("neurons_per_layer must be >= 1");
  if (patience < 1) throw ValidationError("patience must be >= 1");
  if (max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
  penalty_weights.validate();
}

double TrainLog::best_val() const {
  if (best_epoch < 1 || best_epoch > static_cast<int>(val_loss.size()))
    return std::numeric_limits<double>::quiet_NaN();
  return val_loss[static_cast<std::size_t>(best_epoch) - 1];
}

void TrainLog::write_csv(std::ostream& os) const {
  os << "epoch,train_loss,val_loss\n";
  char buf[80];
  for (std::size_t e = 0; e < train_loss.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", e + 1, train_loss[e],
                  val_loss[e]);
    os << buf;
  }
}

AdamState AdamState::zeros_like(const MlpParams& p) {
  AdamState s;
  for (const auto& w : p.weights) {
    s.m_w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    s.v_w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  }
  for (const auto& b : p.biases) {
    s.m_b.push_back(Eigen::VectorXd::Zero(b.size()));
    s.v_b.push_back(Eigen::VectorXd::Zero(b.size()));
  }
  return s;
}

void adam_step(MlpParams& params, const Gradients& grads, AdamState& state,
               double learning_rate) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  if (!grads.all_finite())
    throw NumericalError("non-finite gradient in Adam update");
  ++state.step;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    state.m_w[l] = kBeta1 * state.m_w[l] + (1.0 - kBeta1) * grads.weights[l];
    state.v_w[l] = kBeta2 * state.v_w[l] +
                   (1.0 - kBeta2) * grads.weights[l].array().square().matrix();
    params.weights[l] -=
        (learning_rate * (state.m_w[l] / bc1).array() /
         ((state.v_w[l] / bc2).array().sqrt() + kEps))
            .matrix();
    state.m_b[l] = kBeta1 * state.m_b[l] + (1.0 - kBeta1) * grads.biases[l];
    state.v_b[l] = kBeta2 * state.v_b[l] +
                   (1.0 - kBeta2) * grads.biases[l].array().square().matrix();
    params.biases[l] -= (learning_rate * (state.m_b[l] / bc1).array() /
                         ((state.v_b[l] / bc2).array().sqrt() + kEps))
                            .matrix();
  }
}

std::vector<std::vector<int>> make_batches(int n, int batch_size, Rng& rng) {
  if (n < 1) throw ValidationError("need at least one observation");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  std::vector<int> perm = rng.permutation(n);
  std::vector<std::vector<int>> batches;
  for (int start = 0; start < n; start += batch_size) {
    int len = std::min(batch_size, n - start);
    batches.emplace_back(perm.begin() + start, perm.begin() + start + len);
  }
  return batches;
}

double objective_value(const MlpParams& params, const BatchObjective& obj) {
  const int n = static_cast<int>(obj.features().rows());
  std::vector<int> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  Eigen::MatrixXd out = mlp_forward(params, obj.features());
  return obj.value(out, rows);
}

TrainLog train_network(MlpParams& params, const BatchObjective& train_obj,
                       const BatchObjective& val_obj,
                       const TrainingConfig& config,
                       const std::function<double(const MlpParams&)>& val_score) {
  config.validate();
  const int n_train = static_cast<int>(train_obj.features().rows());
  const int n_val = static_cast<int>(val_obj.features().rows());
  if (n_train < 1 || n_val < 1)
    throw ValidationError("empty training or validation split");

  Rng base(config.seed);
  Rng shuffle_rng = base.derive(0x5u);
  Rng dropout_rng = base.derive(0xDu);

  AdamState adam = AdamState::zeros_like(params);
  TrainLog log;
  MlpParams best = params;
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (const auto& batch : make_batches(n_train, config.batch_size, shuffle_rng)) {
      DropoutMasks masks = sample_dropout_masks(
          params, static_cast<int>(batch.size()), config.dropout_rate,
          dropout_rng);
      auto [loss, grads] = mlp_value_and_grad(
          params, train_obj, batch, masks.layers.empty() ? nullptr : &masks);
      adam_step(params, grads, adam, config.learning_rate);
      epoch_loss += loss * static_cast<double>(batch.size());
    }
    epoch_loss /= static_cast<double>(n_train);

    double val =
        val_score ? val_score(params) : objective_value(params, val_obj);
    if (!std::isfinite(val))
      throw NumericalError("non-finite validation loss at epoch " +
                           std::to_string(epoch));
    log.train_loss.push_back(epoch_loss);
    log.val_loss.push_back(val);

    if (val < best_val - config.min_improvement) {
      best_val = val;
      best = params;
      log.best_epoch = epoch;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
    }
    if (epochs_since_best >= config.patience) {
      log.stop_reason = "early_stop";
      break;
    }
  }
  if (log.stop_reason.empty()) log.stop_reason = "max_epochs";
  params = best;
  return log;
}

}  // namespace drn
