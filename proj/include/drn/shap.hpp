#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "drn/rng.hpp"

namespace drn {

// What to attribute and how to marginalise missing features. `primary`
// evaluates the model target (mean or a quantile); adjustment targets
// additionally need `baseline` and explain primary(x) - baseline(x).
struct ValueFunctionSpec {
  enum class Target { Mean, Quantile, AdjustmentMean, AdjustmentQuantile };

  Target target = Target::Mean;
  double alpha = 0.9;  // quantile level for the quantile targets
  std::function<double(const Eigen::VectorXd&)> primary;
  std::function<double(const Eigen::VectorXd&)> baseline;
  Eigen::MatrixXd background;  // rows drawn from the training features
  int mc_samples = 100;        // M, must not exceed the background rows
  // Players: groups of feature columns toggled together (one-hot coalescing).
  // Empty means one player per column.
  std::vector<std::vector<int>> groups;
  std::uint64_t seed = 0;
  int sample_budget = 4096;  // subset draws when exact enumeration is off

  bool is_adjustment() const {
    return target == Target::AdjustmentMean ||
           target == Target::AdjustmentQuantile;
  }
  double eval_target(const Eigen::VectorXd& x) const;
  std::vector<std::vector<int>> effective_groups(int columns) const;
  void validate(int columns) const;
  std::string describe() const;
};

// M background rows drawn without replacement.
Eigen::MatrixXd draw_background(const Eigen::MatrixXd& X_train, int n_rows,
                                Rng& rng);

// Monte Carlo marginal value function: average target over background rows
// with the player columns in `subset` pinned to x.
double marginal_value_function(const ValueFunctionSpec& spec,
                               const Eigen::VectorXd& x,
                               std::span<const int> subset);

struct ShapExplanation {
  double phi0 = 0.0;
  Eigen::VectorXd phi;  // per player
  double prediction = 0.0;
  std::string target_description;

  double efficiency_gap() const {
    return phi0 + phi.sum() - prediction;
  }
};

// Kernel-weighted constrained least squares. Exact enumeration of all proper
// subsets when players <= 13, kernel-proportional subset sampling beyond.
ShapExplanation kernel_shap(const ValueFunctionSpec& spec,
                            const Eigen::VectorXd& x);

// kernel_shap on the difference target primary - baseline.
ShapExplanation adjustment_shap(const ValueFunctionSpec& spec,
                                const Eigen::VectorXd& x);

// Mean absolute attribution per player.
Eigen::VectorXd shap_importance(std::span<const ShapExplanation> explanations);

struct DependencePoint {
  double feature_value;
  double phi;
  double color_value;  // NaN when no colour feature was requested
};

std::vector<DependencePoint> dependence_data(
    std::span<const ShapExplanation> explanations, const Eigen::MatrixXd& X,
    int feature_column, int player, int color_column = -1);

}  // namespace drn
