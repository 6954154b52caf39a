#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "drn/drn.hpp"
#include "drn/mlp.hpp"

namespace drn {

// Coefficients of the three penalty terms in the regularised objective.
struct PenaltyWeights {
  double kl = 0.0;
  double roughness = 0.0;
  double mean = 0.0;

  void validate() const;
};

// ---- batch losses over refined distributions (evaluation/tests) ----------

// Sum of -ln pdf(y_i), densities floored at 1e-30 before the log; a floor
// event increments *clamp_events when given.
double nll_loss(std::span<const RefinedDistribution> rds,
                std::span<const double> y, int* clamp_events = nullptr);

// Minimisation-form joint binary cross-entropy of the CDF at cutpoints
// c_1..c_K, probabilities clamped to [1e-12, 1-1e-12]; summed over the batch.
double jbce_loss(std::span<const RefinedDistribution> rds,
                 std::span<const double> y);

// Batch mean of -sum_k b_k ln a_k (discretised forward KL against the
// piecewise-constant baseline, additive constant dropped).
double kl_penalty(std::span<const RefinedDistribution> rds);

// Batch mean of the summed squared second differences of the refined density
// levels; zero when fewer than three intervals.
double roughness_penalty(std::span<const RefinedDistribution> rds);

// Batch mean of (refined mean - baseline mean)^2.
double mean_penalty(std::span<const RefinedDistribution> rds,
                    std::span<const double> baseline_means);

// jbce/N + kl*KL + roughness*Phi + mean*MeanPen, all per-observation scale.
double composite_loss(std::span<const RefinedDistribution> rds,
                      std::span<const double> y, const PenaltyWeights& weights);

// ---- training objective ---------------------------------------------------

// Per-dataset quantities that stay fixed while the network trains (the
// baseline is frozen, so masses, tails and means are computed once).
struct DrnContext {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Partition partition;
  Eigen::MatrixXd b;      // n x K baseline masses
  Eigen::MatrixXd log_b;  // floored log masses
  Eigen::VectorXd f0;
  Eigen::VectorXd region_mass;
  Eigen::VectorXd baseline_log_pdf_y;  // baseline log density at y_i
  Eigen::VectorXd tail_mean;           // mean mass outside the region
  Eigen::VectorXd baseline_mean;
  std::vector<int> y_interval;   // containing interval of y_i, -1 outside
  std::vector<int> y_cut_index;  // smallest k in 1..K with y_i <= c_k, else K+1

  int interval_count() const { return partition.interval_count(); }

  static DrnContext build(const GammaGlmModel& glm, const Partition& part,
                          Eigen::MatrixXd X, Eigen::VectorXd y);
};

// Differentiable composite objective on top of a DrnContext. The base term
// is JBCE (the training default), NLL, or nothing (penalties only, used by
// gradient tests); penalties follow PenaltyWeights.
class DrnObjective final : public BatchObjective {
 public:
  enum class Base { Jbce, Nll, None };

  DrnObjective(const DrnContext& ctx, PenaltyWeights weights,
               Base base = Base::Jbce)
      : ctx_(ctx), weights_(weights), base_(base) {}

  const Eigen::MatrixXd& features() const override { return ctx_.X; }
  int output_dim() const override { return ctx_.interval_count(); }
  double value(const Eigen::MatrixXd& outputs,
               std::span<const int> rows) const override;
  double value_and_grad(const Eigen::MatrixXd& outputs,
                        std::span<const int> rows,
                        Eigen::MatrixXd& grad) const override;

  int clamp_events() const { return clamp_events_; }

 private:
  double evaluate(const Eigen::MatrixXd& outputs, std::span<const int> rows,
                  Eigen::MatrixXd* grad) const;

  const DrnContext& ctx_;
  PenaltyWeights weights_;
  Base base_;
  mutable int clamp_events_ = 0;
};

}  // namespace drn
