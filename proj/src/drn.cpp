#include "drn/drn.hpp"

#include <algorithm>
#include <cmath>

#include "drn/errors.hpp"
#include "drn/numeric.hpp"

namespace drn {

Eigen::VectorXd baseline_masses(const GammaDist& baseline, const Partition& part) {
  part.validate();
  const int K = part.interval_count();
  Eigen::VectorXd b(K);
  double prev = baseline.cdf(part.cutpoints[0]);
  for (int k = 0; k < K; ++k) {
    double next = baseline.cdf(part.cutpoints[static_cast<std::size_t>(k) + 1]);
    b(k) = std::max(0.0, next - prev);
    prev = next;
  }
  return b;
}

PpcDensity ppc_transform(const GammaDist& baseline, const Partition& part) {
  Eigen::VectorXd b = baseline_masses(baseline, part);
  Eigen::VectorXd levels(b.size());
  for (int k = 0; k < b.size(); ++k) levels(k) = b(k) / part.width(k);
  return PpcDensity{part, baseline, std::move(levels)};
}

Eigen::VectorXd clamped_log(const Eigen::VectorXd& b) {
  return b.array().max(kMassFloor).log();
}

Eigen::VectorXd refined_masses(const Eigen::VectorXd& log_b,
                               const Eigen::VectorXd& logits,
                               double region_mass) {
  Eigen::VectorXd s = log_b + logits;
  double mx = s.maxCoeff();
  Eigen::VectorXd e = (s.array() - mx).exp();
  return region_mass / e.sum() * e;
}

Eigen::VectorXd adjustment_factors(const Eigen::VectorXd& raw_logits,
                                   const Eigen::VectorXd& b,
                                   double region_mass) {
  if (raw_logits.size() != b.size())
    throw DimensionError("logit/mass length mismatch");
  if ((b.array() <= 0.0).all() || !(region_mass > 0.0))
    throw ValidationError(
        "degenerate baseline: no probability mass in the refinement region");
  Eigen::VectorXd m = refined_masses(clamped_log(b), raw_logits, region_mass);
  return m.array() / b.array().max(kMassFloor);
}

RefinedDistribution::RefinedDistribution(Partition part, GammaDist baseline,
                                         Eigen::VectorXd raw_logits)
    : part_(std::move(part)), baseline_(baseline) {
  part_.validate();
  const int K = part_.interval_count();
  if (raw_logits.size() != K)
    throw DimensionError("network output width " +
                         std::to_string(raw_logits.size()) +
                         " != interval count " + std::to_string(K));
  b_ = baseline_masses(baseline_, part_);
  f0_ = baseline_.cdf(part_.lower());
  region_mass_ = std::max(0.0, baseline_.cdf(part_.upper()) - f0_);
  if ((b_.array() <= 0.0).all() || !(region_mass_ > 0.0))
    throw ValidationError(
        "degenerate baseline: no probability mass in the refinement region");
  floored_ = static_cast<int>((b_.array() < kMassFloor).count());
  m_ = refined_masses(clamped_log(b_), raw_logits, region_mass_);
  cum_.resize(K + 1);
  cum_(0) = f0_;
  for (int k = 0; k < K; ++k) cum_(k + 1) = cum_(k) + m_(k);
}

Eigen::VectorXd RefinedDistribution::adjustments() const {
  return m_.array() / b_.array().max(kMassFloor);
}

double RefinedDistribution::pdf(double y) const {
  int k = part_.interval_of(y);
  if (k < 0) return baseline_.pdf(y);
  return m_(k) / part_.width(k);
}

double RefinedDistribution::cdf(double y) const {
  int k = part_.interval_of(y);
  if (k < 0) return baseline_.cdf(y);
  return cum_(k) + (y - part_.cutpoints[static_cast<std::size_t>(k)]) *
                       (m_(k) / part_.width(k));
}

double RefinedDistribution::quantile(double alpha) const {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("quantile level must lie in (0,1)");
  if (alpha < f0_ || alpha >= cum_(part_.interval_count()))
    return baseline_.quantile(alpha);
  // First interval whose upper CDF exceeds alpha; flat (zero-mass) runs are
  // skipped so the inversion stays exact.
  const auto* begin = cum_.data();
  const auto* end = cum_.data() + cum_.size();
  const auto* it = std::upper_bound(begin, end, alpha);
  int k = static_cast<int>(it - begin) - 1;
  k = std::min(k, part_.interval_count() - 1);
  if (m_(k) <= 0.0) return part_.cutpoints[static_cast<std::size_t>(k)];
  return part_.cutpoints[static_cast<std::size_t>(k)] +
         (alpha - cum_(k)) * part_.width(k) / m_(k);
}

double RefinedDistribution::mean() const {
  double low = gamma_partial_expectation(baseline_, 0.0, part_.lower());
  double high = gamma_partial_expectation(
      baseline_, part_.upper(), std::numeric_limits<double>::infinity());
  double mid = 0.0;
  for (int k = 0; k < part_.interval_count(); ++k)
    mid += m_(k) * part_.midpoint(k);
  return low + mid + high;
}

double RefinedDistribution::variance() const {
  double low = gamma_partial_second_moment(baseline_, 0.0, part_.lower());
  double high = gamma_partial_second_moment(
      baseline_, part_.upper(), std::numeric_limits<double>::infinity());
  double mid = 0.0;
  for (int k = 0; k < part_.interval_count(); ++k) {
    double a = part_.cutpoints[static_cast<std::size_t>(k)];
    double b = part_.cutpoints[static_cast<std::size_t>(k) + 1];
    mid += m_(k) * (a * a + a * b + b * b) / 3.0;
  }
  double mu = mean();
  return low + mid + high - mu * mu;
}

namespace {

// int_0^len ((c - h) + s*u)^2 du for the linear-CDF segments.
double linear_segment_score(double c, double s, double h, double len) {
  double base = c - h;
  if (s == 0.0) return base * base * len;
  double upper = base + s * len;
  return (upper * upper * upper - base * base * base) / (3.0 * s);
}

}  // namespace

double RefinedDistribution::crps(double y) const {
  const double c0 = part_.lower();
  const double cK = part_.upper();
  const int K = part_.interval_count();

  double total = 0.0;

  // Region: CDF is linear on each interval, so the quadratic integrand has a
  // closed form; intervals containing y are split at y.
  for (int k = 0; k < K; ++k) {
    double a = part_.cutpoints[static_cast<std::size_t>(k)];
    double b = part_.cutpoints[static_cast<std::size_t>(k) + 1];
    double slope = m_(k) / part_.width(k);
    if (y > a && y < b) {
      total += linear_segment_score(cum_(k), slope, 0.0, y - a);
      total += linear_segment_score(cum_(k) + slope * (y - a), slope, 1.0, b - y);
    } else {
      double h = (y <= a) ? 1.0 : 0.0;
      total += linear_segment_score(cum_(k), slope, h, b - a);
    }
  }

  // Tails: baseline CDF, truncated at its extreme quantiles.
  double lo = std::min(baseline_.quantile(1e-7), c0);
  lo = std::min(lo, y);
  double hi = std::max(baseline_.quantile(1.0 - 1e-7), cK);
  hi = std::max(hi, y);

  auto integrand = [&](double t) {
    double f = baseline_.cdf(t);
    double h = t > y ? 1.0 : 0.0;
    return (f - h) * (f - h);
  };
  auto tail = [&](double a, double b) {
    if (!(b > a)) return 0.0;
    if (y > a && y < b)
      return adaptive_simpson(integrand, a, y, 0.25e-8) +
             adaptive_simpson(integrand, y, b, 0.25e-8);
    return adaptive_simpson(integrand, a, b, 0.5e-8);
  };
  total += tail(lo, c0);
  total += tail(cK, hi);
  return total;
}

RefinedDistribution drn_forward(const DrnModel& model, const Eigen::VectorXd& x) {
  GammaDist base = glm_conditional(model.baseline, x);
  Eigen::VectorXd logits = mlp_forward(model.net, x);
  return RefinedDistribution(model.partition, base, std::move(logits));
}

MlpParams init_refinement_net(int input_dim, int hidden_layers, int neurons,
                              int intervals, Rng& rng) {
  MlpParams net =
      MlpParams::init(input_dim, hidden_layers, neurons, intervals, rng);
  net.weights.back().setZero();
  return net;
}

std::vector<RefinedDistribution> drn_forward_batch(const DrnModel& model,
                                                   const Eigen::MatrixXd& X) {
  Eigen::MatrixXd logits = mlp_forward(model.net, X);
  std::vector<RefinedDistribution> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    GammaDist base = glm_conditional(model.baseline, X.row(i).transpose());
    out.emplace_back(model.partition, base,
                     Eigen::VectorXd(logits.row(i).transpose()));
  }
  return out;
}

}  // namespace drn
