#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "drn/distribution.hpp"
#include "drn/gamma.hpp"
#include "drn/glm.hpp"
#include "drn/mlp.hpp"
#include "drn/partition.hpp"

namespace drn {

// ---- CANN -----------------------------------------------------------------

// GLM nested in a network. The net has two heads: a credibility logit
// (sigmoid-squashed to alpha in (0,1)) and a raw mean adjustment; the fitted
// mean is exp(alpha * eta_glm + (1-alpha) * adjustment). Trained on the gamma
// deviance; the dispersion is re-estimated afterwards for distribution
// queries.
struct CannModel {
  GammaGlmModel glm;  // frozen
  MlpParams net;      // output width 2
  double dispersion = 1.0;
  std::uint64_t config_hash = 0;
};

// Glorot net with the credibility-head bias raised so training starts near
// the GLM (alpha ~ 0.95 at bias +3).
MlpParams make_cann_net(int input_dim, int hidden_layers, int neurons,
                        Rng& rng, double credibility_bias = 3.0);

double cann_credibility(const CannModel& model, const Eigen::VectorXd& x);
double cann_mean(const CannModel& model, const Eigen::VectorXd& x);
GammaDist cann_conditional(const CannModel& model, const Eigen::VectorXd& x);

// Gamma deviance 2*sum[(y-mu)/mu - ln(y/mu)].
double cann_loss(const CannModel& model, const Eigen::MatrixXd& X,
                 const Eigen::VectorXd& y);

// Per-observation deviance objective for training the CANN net.
class CannObjective final : public BatchObjective {
 public:
  CannObjective(const GammaGlmModel& glm, Eigen::MatrixXd X, Eigen::VectorXd y);

  const Eigen::MatrixXd& features() const override { return X_; }
  int output_dim() const override { return 2; }
  double value(const Eigen::MatrixXd& outputs,
               std::span<const int> rows) const override;
  double value_and_grad(const Eigen::MatrixXd& outputs,
                        std::span<const int> rows,
                        Eigen::MatrixXd& grad) const override;

 private:
  double evaluate(const Eigen::MatrixXd& outputs, std::span<const int> rows,
                  Eigen::MatrixXd* grad) const;
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  Eigen::VectorXd eta_glm_;
};

// Pearson dispersion of y against the CANN means.
double cann_pearson_dispersion(const CannModel& model, const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& y);

// ---- MDN ------------------------------------------------------------------

// Gamma mixture density network. The net emits 3*components values split
// into mixing logits, shape logits and scale logits; mixing weights are a
// softmax, shapes and scales go through exp (softplus available as the
// alternative the tuning tables mention).
struct MdnModel {
  enum class Transform { Exp, Softplus };

  MlpParams net;
  int components = 1;
  Transform transform = Transform::Exp;
  std::uint64_t config_hash = 0;
};

struct MdnParams {
  Eigen::VectorXd mix;    // probability vector
  Eigen::VectorXd shape;  // > 0
  Eigen::VectorXd scale;  // > 0
};

MdnParams mdn_params(const MdnModel& model, const Eigen::VectorXd& x);

class MixtureDistribution final : public Distribution {
 public:
  explicit MixtureDistribution(MdnParams params);

  double pdf(double y) const override;
  double log_pdf(double y) const;
  double cdf(double y) const override;
  double quantile(double alpha) const override;
  double mean() const override;
  const MdnParams& params() const { return params_; }

 private:
  MdnParams params_;
};

MixtureDistribution mdn_conditional(const MdnModel& model,
                                    const Eigen::VectorXd& x);

// Summed negative log-likelihood via log-sum-exp over component densities.
double mdn_nll(const MdnModel& model, const Eigen::MatrixXd& X,
               const Eigen::VectorXd& y);

class MdnObjective final : public BatchObjective {
 public:
  MdnObjective(Eigen::MatrixXd X, Eigen::VectorXd y, int components,
               MdnModel::Transform transform = MdnModel::Transform::Exp);

  const Eigen::MatrixXd& features() const override { return X_; }
  int output_dim() const override { return 3 * components_; }
  double value(const Eigen::MatrixXd& outputs,
               std::span<const int> rows) const override;
  double value_and_grad(const Eigen::MatrixXd& outputs,
                        std::span<const int> rows,
                        Eigen::MatrixXd& grad) const override;

 private:
  double evaluate(const Eigen::MatrixXd& outputs, std::span<const int> rows,
                  Eigen::MatrixXd* grad) const;
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  int components_;
  MdnModel::Transform transform_;
};

// ---- DDR ------------------------------------------------------------------

// Histogram regression over a partition: softmax interval probabilities,
// uniform density inside each interval and zero outside, so out-of-region
// observations score an infinite NLL.
struct DdrModel {
  MlpParams net;  // output width K
  Partition partition;
  std::uint64_t config_hash = 0;
};

Eigen::VectorXd ddr_forward(const DdrModel& model, const Eigen::VectorXd& x);

class DdrDistribution final : public Distribution {
 public:
  DdrDistribution(Partition part, Eigen::VectorXd probs);

  double pdf(double y) const override;
  double cdf(double y) const override;
  double quantile(double alpha) const override;
  double mean() const override;
  double crps(double y) const override;
  const Eigen::VectorXd& probabilities() const { return probs_; }
  const Partition& partition() const { return part_; }

 private:
  Partition part_;
  Eigen::VectorXd probs_;
  Eigen::VectorXd cum_;  // cdf at cutpoints
};

DdrDistribution ddr_conditional(const DdrModel& model, const Eigen::VectorXd& x);

// Per-observation JBCE at the DDR's own cutpoints.
double ddr_loss(const DdrModel& model, const Eigen::MatrixXd& X,
                const Eigen::VectorXd& y);

class DdrObjective final : public BatchObjective {
 public:
  DdrObjective(Eigen::MatrixXd X, Eigen::VectorXd y, Partition part);

  const Eigen::MatrixXd& features() const override { return X_; }
  int output_dim() const override { return partition_.interval_count(); }
  double value(const Eigen::MatrixXd& outputs,
               std::span<const int> rows) const override;
  double value_and_grad(const Eigen::MatrixXd& outputs,
                        std::span<const int> rows,
                        Eigen::MatrixXd& grad) const override;

 private:
  double evaluate(const Eigen::MatrixXd& outputs, std::span<const int> rows,
                  Eigen::MatrixXd* grad) const;
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  Partition partition_;
  std::vector<int> cut_index_;
};

}  // namespace drn
