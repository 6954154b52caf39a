#include "drn/gamma.hpp"

#include <boost/math/distributions/gamma.hpp>
#include <cmath>
#include <limits>

#include "drn/errors.hpp"
#include "drn/numeric.hpp"

namespace drn {

double Distribution::crps(double y) const {
  const double lo = std::min(quantile(1e-7), y);
  const double hi = std::max(quantile(1.0 - 1e-7), y);
  double below = 0.0;
  if (y > lo)
    below = adaptive_simpson(
        [this](double t) {
          double f = cdf(t);
          return f * f;
        },
        lo, y, 0.5e-8);
  double above = 0.0;
  if (hi > y)
    above = adaptive_simpson(
        [this](double t) {
          double f = 1.0 - cdf(t);
          return f * f;
        },
        y, hi, 0.5e-8);
  return below + above;
}

double bisect_quantile(const Distribution& d, double alpha, double lo,
                       double hi, double tol) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("quantile level must lie in (0,1)");
  double flo = d.cdf(lo);
  double fhi = d.cdf(hi);
  // Expand the bracket upward if needed.
  int guard = 0;
  while (fhi < alpha && guard++ < 200) {
    lo = hi;
    flo = fhi;
    hi = hi > 0 ? hi * 2.0 : 1.0;
    fhi = d.cdf(hi);
  }
  (void)flo;
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    double fm = d.cdf(mid);
    if (std::abs(fm - alpha) < tol) return mid;
    if (fm < alpha)
      lo = mid;
    else
      hi = mid;
  }
  return mid;
}

GammaDist::GammaDist(double shape, double scale) : shape_(shape), scale_(scale) {
  if (!(shape > 0.0) || !(scale > 0.0))
    throw ValidationError("gamma distribution needs shape > 0 and scale > 0");
}

double GammaDist::pdf(double y) const {
  if (y < 0.0) return 0.0;
  boost::math::gamma_distribution<double> g(shape_, scale_);
  if (y == 0.0 && shape_ < 1.0) return std::numeric_limits<double>::infinity();
  return boost::math::pdf(g, y);
}

double GammaDist::log_pdf(double y) const {
  if (y < 0.0) return -std::numeric_limits<double>::infinity();
  return (shape_ - 1.0) * std::log(y) - y / scale_ - std::lgamma(shape_) -
         shape_ * std::log(scale_);
}

double GammaDist::cdf(double y) const {
  if (y <= 0.0) return 0.0;
  if (std::isinf(y)) return 1.0;
  boost::math::gamma_distribution<double> g(shape_, scale_);
  return boost::math::cdf(g, y);
}

double GammaDist::quantile(double alpha) const {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("gamma quantile level must lie in (0,1)");
  boost::math::gamma_distribution<double> g(shape_, scale_);
  return boost::math::quantile(g, alpha);
}

double gamma_partial_expectation(const GammaDist& d, double a, double b) {
  GammaDist shifted(d.shape() + 1.0, d.scale());
  double fb = std::isinf(b) ? 1.0 : shifted.cdf(b);
  return d.mean() * (fb - shifted.cdf(a));
}

double gamma_partial_second_moment(const GammaDist& d, double a, double b) {
  GammaDist shifted(d.shape() + 2.0, d.scale());
  double fb = std::isinf(b) ? 1.0 : shifted.cdf(b);
  return d.shape() * (d.shape() + 1.0) * d.scale() * d.scale() *
         (fb - shifted.cdf(a));
}

}  // namespace drn
