#pragma once

#include <memory>

namespace drn {

// Common query surface for every conditional distribution produced by the
// models here (gamma baseline, refined, mixture, interval-histogram).
class Distribution {
 public:
  virtual ~Distribution() = default;

  virtual double pdf(double y) const = 0;
  virtual double cdf(double y) const = 0;
  virtual double quantile(double alpha) const = 0;  // alpha in (0,1)
  virtual double mean() const = 0;

  // Integrated quadratic score: int (F(t) - 1{t > y})^2 dt. The default
  // truncates the tails at the 1e-7 / 1-1e-7 quantiles and integrates by
  // adaptive Simpson (abs tol 1e-8); subclasses with piecewise-linear CDFs
  // override with closed forms.
  virtual double crps(double y) const;
};

// Monotone bisection for CDF inversion: |cdf(q) - alpha| < tol on exit.
// Bracket [lo, hi] must satisfy cdf(lo) <= alpha <= cdf(hi).
double bisect_quantile(const Distribution& d, double alpha, double lo,
                       double hi, double tol = 1e-10);

}  // namespace drn
