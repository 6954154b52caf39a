#include "drn/losses.hpp"

#include <cmath>

#include "drn/errors.hpp"
#include "loss_kernels.hpp"

namespace drn {

using detail::cut_index_of;
using detail::jbce_kernel;
using detail::kl_kernel;
using detail::kPdfFloor;
using detail::mean_kernel;
using detail::nll_kernel;
using detail::roughness_kernel;

namespace {

Eigen::VectorXd safe_log(const Eigen::VectorXd& m) {
  return m.array().max(1e-300).log();
}

}  // namespace

void PenaltyWeights::validate() const {
  if (kl < 0.0 || roughness < 0.0 || mean < 0.0)
    throw ValidationError("penalty coefficients must be nonnegative");
}

double nll_loss(std::span<const RefinedDistribution> rds,
                std::span<const double> y, int* clamp_events) {
  if (rds.size() != y.size()) throw DimensionError("batch size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < rds.size(); ++i) {
    double pdf = rds[i].pdf(y[i]);
    if (pdf < kPdfFloor) {
      if (clamp_events) ++*clamp_events;
      pdf = kPdfFloor;
    }
    total -= std::log(pdf);
  }
  return total;
}

double jbce_loss(std::span<const RefinedDistribution> rds,
                 std::span<const double> y) {
  if (rds.size() != y.size()) throw DimensionError("batch size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < rds.size(); ++i) {
    const auto& rd = rds[i];
    total += jbce_kernel(rd.partition(), rd.masses(), rd.cdf_at_lower(),
                         cut_index_of(rd.partition(), y[i]), nullptr);
  }
  return total;
}

double kl_penalty(std::span<const RefinedDistribution> rds) {
  if (rds.empty()) return 0.0;
  double total = 0.0;
  for (const auto& rd : rds) {
    const Eigen::VectorXd& b = rd.baseline_mass_vector();
    total += kl_kernel(b, clamped_log(b), safe_log(rd.masses()), nullptr);
  }
  return total / static_cast<double>(rds.size());
}

double roughness_penalty(std::span<const RefinedDistribution> rds) {
  if (rds.empty()) return 0.0;
  double total = 0.0;
  for (const auto& rd : rds)
    total += roughness_kernel(rd.partition(), rd.masses(), nullptr);
  return total / static_cast<double>(rds.size());
}

double mean_penalty(std::span<const RefinedDistribution> rds,
                    std::span<const double> baseline_means) {
  if (rds.size() != baseline_means.size())
    throw DimensionError("batch size mismatch");
  if (rds.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < rds.size(); ++i) {
    double delta = rds[i].mean() - baseline_means[i];
    total += delta * delta;
  }
  return total / static_cast<double>(rds.size());
}

double composite_loss(std::span<const RefinedDistribution> rds,
                      std::span<const double> y,
                      const PenaltyWeights& weights) {
  weights.validate();
  if (rds.empty()) return 0.0;
  const double n = static_cast<double>(rds.size());
  double total = jbce_loss(rds, y) / n;
  if (weights.kl > 0.0) total += weights.kl * kl_penalty(rds);
  if (weights.roughness > 0.0)
    total += weights.roughness * roughness_penalty(rds);
  if (weights.mean > 0.0) {
    std::vector<double> bm(rds.size());
    for (std::size_t i = 0; i < rds.size(); ++i) bm[i] = rds[i].baseline().mean();
    total += weights.mean * mean_penalty(rds, bm);
  }
  return total;
}

DrnContext DrnContext::build(const GammaGlmModel& glm, const Partition& part,
                             Eigen::MatrixXd X, Eigen::VectorXd y) {
  part.validate();
  if (X.rows() != y.size()) throw DimensionError("response length != rows");
  const auto n = X.rows();
  const int K = part.interval_count();

  DrnContext ctx;
  ctx.partition = part;
  ctx.b.resize(n, K);
  ctx.log_b.resize(n, K);
  ctx.f0.resize(n);
  ctx.region_mass.resize(n);
  ctx.baseline_log_pdf_y.resize(n);
  ctx.tail_mean.resize(n);
  ctx.baseline_mean.resize(n);
  ctx.y_interval.resize(static_cast<std::size_t>(n));
  ctx.y_cut_index.resize(static_cast<std::size_t>(n));

  const double inf = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    GammaDist g = glm_conditional(glm, X.row(i).transpose());
    Eigen::VectorXd b = baseline_masses(g, part);
    double f0 = g.cdf(part.lower());
    double region = std::max(0.0, g.cdf(part.upper()) - f0);
    if (!(region > 0.0))
      throw ValidationError("degenerate baseline at row " + std::to_string(i) +
                            ": no mass in the refinement region");
    ctx.b.row(i) = b.transpose();
    ctx.log_b.row(i) = clamped_log(b).transpose();
    ctx.f0(i) = f0;
    ctx.region_mass(i) = region;
    ctx.baseline_log_pdf_y(i) = g.log_pdf(y(i));
    ctx.tail_mean(i) = gamma_partial_expectation(g, 0.0, part.lower()) +
                       gamma_partial_expectation(g, part.upper(), inf);
    ctx.baseline_mean(i) = g.mean();
    ctx.y_interval[static_cast<std::size_t>(i)] = part.interval_of(y(i));
    ctx.y_cut_index[static_cast<std::size_t>(i)] = cut_index_of(part, y(i));
  }
  ctx.X = std::move(X);
  ctx.y = std::move(y);
  return ctx;
}

double DrnObjective::value(const Eigen::MatrixXd& outputs,
                           std::span<const int> rows) const {
  return evaluate(outputs, rows, nullptr);
}

double DrnObjective::value_and_grad(const Eigen::MatrixXd& outputs,
                                    std::span<const int> rows,
                                    Eigen::MatrixXd& grad) const {
  return evaluate(outputs, rows, &grad);
}

double DrnObjective::evaluate(const Eigen::MatrixXd& outputs,
                              std::span<const int> rows,
                              Eigen::MatrixXd* grad) const {
  weights_.validate();
  if (rows.empty()) throw ValidationError("empty batch");
  const int K = ctx_.interval_count();
  if (outputs.cols() != K ||
      outputs.rows() != static_cast<Eigen::Index>(rows.size()))
    throw DimensionError("output block shape mismatch");

  const double inv_n = 1.0 / static_cast<double>(rows.size());
  double total = 0.0;
  Eigen::VectorXd u(K), term_u(K), log_m(K), m(K);
  for (Eigen::Index j = 0; j < outputs.rows(); ++j) {
    const int i = rows[static_cast<std::size_t>(j)];
    const double region = ctx_.region_mass(i);
    Eigen::VectorXd s =
        ctx_.log_b.row(i).transpose() + outputs.row(j).transpose();
    double mx = s.maxCoeff();
    double lse = mx + std::log((s.array() - mx).exp().sum());
    log_m = s.array() - lse + std::log(region);
    m = log_m.array().exp();

    u.setZero();
    Eigen::VectorXd* up = grad ? &u : nullptr;
    double v = 0.0;
    if (base_ == Base::Jbce)
      v += jbce_kernel(ctx_.partition, m, ctx_.f0(i),
                       ctx_.y_cut_index[static_cast<std::size_t>(i)], up);
    else if (base_ == Base::Nll)
      v += nll_kernel(ctx_.partition, log_m,
                      ctx_.y_interval[static_cast<std::size_t>(i)],
                      ctx_.baseline_log_pdf_y(i), up, &clamp_events_);

    Eigen::VectorXd* tp = grad ? &term_u : nullptr;
    if (weights_.kl > 0.0) {
      term_u.setZero();
      v += weights_.kl * kl_kernel(ctx_.b.row(i).transpose(),
                                   ctx_.log_b.row(i).transpose(), log_m, tp);
      if (grad) u += weights_.kl * term_u;
    }
    if (weights_.roughness > 0.0) {
      term_u.setZero();
      v += weights_.roughness * roughness_kernel(ctx_.partition, m, tp);
      if (grad) u += weights_.roughness * term_u;
    }
    if (weights_.mean > 0.0) {
      term_u.setZero();
      v += weights_.mean * mean_kernel(ctx_.partition, m, ctx_.tail_mean(i),
                                       ctx_.baseline_mean(i), tp);
      if (grad) u += weights_.mean * term_u;
    }

    total += inv_n * v;
    if (grad)
      grad->row(j) = inv_n * (u - m * (u.sum() / region)).transpose();
  }
  return total;
}

}  // namespace drn
