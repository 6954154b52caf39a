#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "drn/losses.hpp"
#include "drn/mlp.hpp"

namespace drn {

struct TrainingConfig {
  double learning_rate = 1e-3;
  int batch_size = 256;
  double dropout_rate = 0.0;
  int hidden_layers = 2;
  int neurons_per_layer = 64;
  int patience = 30;
  int max_epochs = 1000;
  PenaltyWeights penalty_weights;
  std::uint64_t seed = 1;
  // Validation loss must drop by at least this much to count as improvement.
  double min_improvement = 1e-6;

  void validate() const;
};

struct TrainLog {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = 0;  // 1-based
  std::string stop_reason;

  double best_val() const;
  void write_csv(std::ostream& os) const;
};

struct AdamState {
  std::vector<Eigen::MatrixXd> m_w, v_w;
  std::vector<Eigen::VectorXd> m_b, v_b;
  long step = 0;

  static AdamState zeros_like(const MlpParams& p);
};

// One Adam update, beta1=0.9, beta2=0.999, eps=1e-8, bias-corrected moments.
// Throws NumericalError on non-finite gradients.
void adam_step(MlpParams& params, const Gradients& grads, AdamState& state,
               double learning_rate);

// Seeded permutation of 0..n-1 cut into contiguous slices; the last slice may
// be short.
std::vector<std::vector<int>> make_batches(int n, int batch_size, Rng& rng);

// Objective value over every row of the objective's dataset (no dropout).
double objective_value(const MlpParams& params, const BatchObjective& obj);

// Mini-batch Adam with dropout and early stopping. After each epoch the
// validation score is val_score(params) when provided, otherwise the
// validation objective without dropout; training stops once `patience`
// epochs pass without improvement, and `params` is rolled back to the best
// epoch.
TrainLog train_network(MlpParams& params, const BatchObjective& train_obj,
                       const BatchObjective& val_obj,
                       const TrainingConfig& config,
                       const std::function<double(const MlpParams&)>& val_score = {});

}  // namespace drn
