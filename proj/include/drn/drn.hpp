#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "drn/distribution.hpp"
#include "drn/gamma.hpp"
#include "drn/glm.hpp"
#include "drn/mlp.hpp"
#include "drn/partition.hpp"

namespace drn {

// Floor applied to baseline masses inside logs so empty intervals stay
// finite without disturbing non-degenerate values.
inline constexpr double kMassFloor = 1e-30;

// Baseline probability mass per interval: b_k = F(c_k) - F(c_{k-1}).
Eigen::VectorXd baseline_masses(const GammaDist& baseline, const Partition& part);

// Piecewise-constant rewrite of the baseline density over the partition;
// outside the region it delegates to the baseline itself.
struct PpcDensity {
  Partition partition;
  GammaDist baseline;
  Eigen::VectorXd levels;  // b_k / |T_k|

  double operator()(double y) const {
    int k = partition.interval_of(y);
    return k >= 0 ? levels(k) : baseline.pdf(y);
  }
};

PpcDensity ppc_transform(const GammaDist& baseline, const Partition& part);

// region_mass * softmax(log_b + logits), numerically stable. log_b must
// already carry the kMassFloor clamp.
Eigen::VectorXd refined_masses(const Eigen::VectorXd& log_b,
                               const Eigen::VectorXd& logits,
                               double region_mass);

Eigen::VectorXd clamped_log(const Eigen::VectorXd& b);

// Multiplicative corrections a_k with a_k * b_k = refined mass; sum of
// refined masses equals region_mass. Throws if the baseline places no mass
// in the region.
Eigen::VectorXd adjustment_factors(const Eigen::VectorXd& raw_logits,
                                   const Eigen::VectorXd& b,
                                   double region_mass);

// Refined conditional distribution: baseline tails outside [c_0, c_K),
// per-interval uniform masses a_k * b_k inside.
class RefinedDistribution final : public Distribution {
 public:
  RefinedDistribution(Partition part, GammaDist baseline,
                      Eigen::VectorXd raw_logits);

  double pdf(double y) const override;
  double cdf(double y) const override;
  double quantile(double alpha) const override;
  double mean() const override;
  double variance() const;
  double crps(double y) const override;

  const Partition& partition() const { return part_; }
  const GammaDist& baseline() const { return baseline_; }
  const Eigen::VectorXd& masses() const { return m_; }
  const Eigen::VectorXd& baseline_mass_vector() const { return b_; }
  // a_k = m_k / max(b_k, floor); entries where the floor was active are
  // reported but not physically meaningful.
  Eigen::VectorXd adjustments() const;
  int floored_intervals() const { return floored_; }
  double region_mass() const { return region_mass_; }
  double cdf_at_lower() const { return f0_; }
  // CDF evaluated at cutpoint k (0..K).
  double cdf_at_cutpoint(int k) const { return cum_(k); }

 private:
  Partition part_;
  GammaDist baseline_;
  Eigen::VectorXd b_;    // baseline masses
  Eigen::VectorXd m_;    // refined masses
  Eigen::VectorXd cum_;  // cdf at cutpoints, size K+1
  double f0_ = 0.0;
  double region_mass_ = 0.0;
  int floored_ = 0;
};

// Baseline model, partition, and refinement network trained together.
struct DrnModel {
  GammaGlmModel baseline;
  Partition partition;
  MlpParams net;
  std::uint64_t config_hash = 0;
};

RefinedDistribution drn_forward(const DrnModel& model, const Eigen::VectorXd& x);

std::vector<RefinedDistribution> drn_forward_batch(const DrnModel& model,
                                                   const Eigen::MatrixXd& X);

// Refinement-network initialiser: Glorot hidden layers with a zero output
// layer, so training starts exactly at the piecewise-constant baseline
// (every adjustment factor is 1) and intervals the baseline starves receive
// no spurious initial logit.
MlpParams init_refinement_net(int input_dim, int hidden_layers, int neurons,
                              int intervals, Rng& rng);

}  // namespace drn
