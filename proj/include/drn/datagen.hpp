#pragma once

#include <cstdint>
#include <functional>

#include "drn/dataset.hpp"
#include "drn/distribution.hpp"
#include "drn/gamma.hpp"

namespace drn {

struct SyntheticSplits {
  Dataset train, val, test;
};

// Bivariate-normal features (sd 0.25, correlation 0.25); the response is the
// sum of a gamma and a lognormal draw sharing the mean function
// mu(x) = exp(-x1 + x2) with dispersion phi(x) = exp(x1)/(1 + exp(x1*x2)).
// phi enters the gamma as shape 1/phi, scale mu*phi, and the lognormal as the
// log-scale standard deviation.
SyntheticSplits gen_synthetic_main(int n_train, int n_val, int n_test,
                                   std::uint64_t seed);

double synthetic_main_mu(double x1, double x2);
double synthetic_main_phi(double x1, double x2);

// Independent-feature regression set: X_j ~ N(0, 0.5^2),
// Y | X ~ N(-x1 + x2, (0.5*(x1^2 + x2^2))^2), split 60/20/20.
SyntheticSplits gen_synthetic_reg(int n, std::uint64_t seed);

// The true conditional law of the main generator: convolution of the gamma
// and lognormal components, evaluated by quadrature (abs tol 1e-6 areas).
class CompoundTrueDistribution final : public Distribution {
 public:
  CompoundTrueDistribution(double mu, double phi);

  double pdf(double y) const override;
  double cdf(double y) const override;
  double quantile(double alpha) const override;
  double mean() const override;

 private:
  double convolve(double y,
                  const std::function<double(double)>& lognormal_factor) const;

  double mu_;
  double phi_;
  GammaDist gamma_;
};

CompoundTrueDistribution synthetic_main_true_dist(double x1, double x2);

}  // namespace drn
