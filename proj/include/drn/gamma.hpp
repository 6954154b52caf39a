#pragma once

#include "drn/distribution.hpp"

namespace drn {

// Gamma distribution in shape/scale form: mean = shape * scale,
// variance = shape * scale^2.
class GammaDist final : public Distribution {
 public:
  GammaDist(double shape, double scale);

  double shape() const { return shape_; }
  double scale() const { return scale_; }

  double pdf(double y) const override;
  double cdf(double y) const override;
  double quantile(double alpha) const override;
  double mean() const override { return shape_ * scale_; }
  double variance() const { return shape_ * scale_ * scale_; }

  double log_pdf(double y) const;

 private:
  double shape_;
  double scale_;
};

// int_a^b y f(y) dy via the shape-shift identity
// = mean * (F_{shape+1}(b) - F_{shape+1}(a)). Accepts b = +inf.
double gamma_partial_expectation(const GammaDist& d, double a, double b);

// int_a^b y^2 f(y) dy = shape*(shape+1)*scale^2 * (F_{shape+2}(b) - F_{shape+2}(a)).
double gamma_partial_second_moment(const GammaDist& d, double a, double b);

}  // namespace drn
