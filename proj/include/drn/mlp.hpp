#pragma once

#include <Eigen/Dense>
#include <span>
#include <utility>
#include <vector>

#include "drn/rng.hpp"

namespace drn {

// Feedforward network parameters. weights[l] is fan_in x fan_out; hidden
// layers use the leaky rectifier, the output layer is linear. Immutable by
// convention once training finishes; forward passes are pure.
struct MlpParams {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  double leaky_slope = 0.01;

  int layer_count() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return static_cast<int>(weights.front().rows()); }
  int output_dim() const { return static_cast<int>(weights.back().cols()); }

  // Conformable adjacent shapes, finite entries.
  void validate() const;

  // Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.
  static MlpParams init(int input_dim, int hidden_layers, int neurons,
                        int output_dim, Rng& rng, double leaky_slope = 0.01);

  // Explicit architecture, all-zero parameters (useful in tests).
  static MlpParams zeros(const std::vector<int>& dims, double leaky_slope = 0.01);
};

// Per-parameter partials of a scalar loss; shape-congruent with MlpParams.
struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static Gradients zeros_like(const MlpParams& p);
  void scale(double s);
  bool all_finite() const;
};

// Inverted-scaling dropout masks for the hidden layers: entries are 0 or
// 1/(1-rate). Empty masks vector means no dropout.
struct DropoutMasks {
  std::vector<Eigen::MatrixXd> layers;
};

DropoutMasks sample_dropout_masks(const MlpParams& p, int batch, double rate,
                                  Rng& rng);

// Saved activations from a forward pass, consumed by the backward pass.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> preact;  // per layer, pre-activation values
  std::vector<Eigen::MatrixXd> act;     // act[0] = input; post-activation+mask
};

// Batched forward pass; rows of X are instances. Masks, when given, apply to
// hidden activations only.
Eigen::MatrixXd mlp_forward(const MlpParams& p, const Eigen::MatrixXd& X,
                            const DropoutMasks* masks = nullptr,
                            ForwardCache* cache = nullptr);

// Single-instance convenience wrapper.
Eigen::VectorXd mlp_forward(const MlpParams& p, const Eigen::VectorXd& x);

// Reverse-mode pass: dL/d(output) -> per-parameter gradients.
Gradients mlp_backward(const MlpParams& p, const ForwardCache& cache,
                       const Eigen::MatrixXd& dL_doutput,
                       const DropoutMasks* masks = nullptr);

// A scalar training objective over a dataset. `outputs` holds the raw network
// outputs for the instances listed in `rows`; value_and_grad must fill `grad`
// with dLoss/doutputs of the same shape.
class BatchObjective {
 public:
  virtual ~BatchObjective() = default;
  virtual const Eigen::MatrixXd& features() const = 0;
  virtual int output_dim() const = 0;
  virtual double value(const Eigen::MatrixXd& outputs,
                       std::span<const int> rows) const = 0;
  virtual double value_and_grad(const Eigen::MatrixXd& outputs,
                                std::span<const int> rows,
                                Eigen::MatrixXd& grad) const = 0;
};

// Forward + loss + exact reverse-mode gradients for one batch. Throws
// NumericalError (with the first dataset row of the batch) if the loss is
// non-finite.
std::pair<double, Gradients> mlp_value_and_grad(
    const MlpParams& p, const BatchObjective& obj, std::span<const int> rows,
    const DropoutMasks* masks = nullptr);

// Max over parameters of |analytic - central difference| / max(1, |analytic|).
double finite_diff_check(const MlpParams& p, const BatchObjective& obj,
                         std::span<const int> rows, double step);

}  // namespace drn
