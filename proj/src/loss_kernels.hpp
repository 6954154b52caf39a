#pragma once

// Internal per-instance loss kernels shared by the refinement and histogram
// objectives. Each returns the loss term and, when `u` is given, accumulates
// the mass-scaled gradient u_k = m_k * dTerm/dm_k; for masses produced by a
// softmax with total R the chain rule is then dTerm/dlogit = u - m*sum(u)/R,
// which stays finite even when individual masses underflow.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "drn/partition.hpp"

namespace drn::detail {

inline constexpr double kPdfFloor = 1e-30;
inline constexpr double kProbClamp = 1e-12;

inline int cut_index_of(const Partition& part, double y) {
  const auto& c = part.cutpoints;
  auto it = std::lower_bound(c.begin() + 1, c.end(), y);
  return static_cast<int>(it - c.begin());  // K+1 when y exceeds every cutpoint
}

inline double nll_kernel(const Partition& part, const Eigen::VectorXd& log_m,
                         int yk, double outside_log_pdf, Eigen::VectorXd* u,
                         int* clamps) {
  const double log_floor = std::log(kPdfFloor);
  if (yk < 0) {
    if (outside_log_pdf < log_floor) {
      if (clamps) ++*clamps;
      return -log_floor;
    }
    return -outside_log_pdf;
  }
  double log_pdf = log_m(yk) - std::log(part.width(yk));
  if (log_pdf < log_floor) {
    if (clamps) ++*clamps;
    return -log_floor;
  }
  if (u) (*u)(yk) -= 1.0;
  return -log_pdf;
}

inline double jbce_kernel(const Partition& part, const Eigen::VectorXd& m,
                          double f0, int cut_index, Eigen::VectorXd* u) {
  const int K = part.interval_count();
  double loss = 0.0;
  double f = f0;
  Eigen::VectorXd dldf;
  if (u) dldf = Eigen::VectorXd::Zero(K + 1);
  for (int k = 1; k <= K; ++k) {
    f += m(k - 1);
    double fc = std::min(std::max(f, kProbClamp), 1.0 - kProbClamp);
    bool clamped = fc != f;
    if (k >= cut_index) {
      loss -= std::log(fc);
      if (u && !clamped) dldf(k) = -1.0 / fc;
    } else {
      loss -= std::log(1.0 - fc);
      if (u && !clamped) dldf(k) = 1.0 / (1.0 - fc);
    }
  }
  if (u) {
    double suffix = 0.0;
    for (int k = K; k >= 1; --k) {
      suffix += dldf(k);
      (*u)(k - 1) += m(k - 1) * suffix;
    }
  }
  return loss;
}

inline double kl_kernel(const Eigen::VectorXd& b, const Eigen::VectorXd& log_b,
                        const Eigen::VectorXd& log_m, Eigen::VectorXd* u) {
  double v = 0.0;
  for (int k = 0; k < b.size(); ++k) {
    if (b(k) <= 0.0) continue;
    v -= b(k) * (log_m(k) - log_b(k));
    if (u) (*u)(k) -= b(k);
  }
  return v;
}

inline double roughness_kernel(const Partition& part, const Eigen::VectorXd& m,
                               Eigen::VectorXd* u) {
  const int K = part.interval_count();
  if (K < 3) return 0.0;
  Eigen::VectorXd d(K);
  for (int k = 0; k < K; ++k) d(k) = m(k) / part.width(k);
  double v = 0.0;
  Eigen::VectorXd dd;
  if (u) dd = Eigen::VectorXd::Zero(K);
  for (int t = 0; t + 2 < K; ++t) {
    double e = d(t + 2) - 2.0 * d(t + 1) + d(t);
    v += e * e;
    if (u) {
      dd(t) += 2.0 * e;
      dd(t + 1) -= 4.0 * e;
      dd(t + 2) += 2.0 * e;
    }
  }
  if (u)
    for (int k = 0; k < K; ++k) (*u)(k) += m(k) * dd(k) / part.width(k);
  return v;
}

inline double mean_kernel(const Partition& part, const Eigen::VectorXd& m,
                          double tail_mean, double baseline_mean,
                          Eigen::VectorXd* u) {
  double mu = tail_mean;
  for (int k = 0; k < m.size(); ++k) mu += m(k) * part.midpoint(k);
  double delta = mu - baseline_mean;
  if (u)
    for (int k = 0; k < m.size(); ++k)
      (*u)(k) += 2.0 * delta * m(k) * part.midpoint(k);
  return delta * delta;
}

}  // namespace drn::detail
