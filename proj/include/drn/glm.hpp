#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "drn/gamma.hpp"

namespace drn {

// Gamma GLM with log link. beta includes the intercept at index 0; the
// conditional distribution at x is Gamma(shape = 1/dispersion,
// scale = exp(x'beta) * dispersion).
struct GammaGlmModel {
  Eigen::VectorXd beta;
  double dispersion = 1.0;
  std::vector<std::string> feature_names;
  bool converged = true;
  int irls_iterations = 0;

  double linear_predictor(const Eigen::VectorXd& x) const;
  double mean(const Eigen::VectorXd& x) const {
    return std::exp(linear_predictor(x));
  }
};

// IRLS fit (variance function V(mu) = mu^2, log link), dispersion by the
// Pearson estimator. X is n x p without an intercept column; all y > 0.
GammaGlmModel fit_gamma_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            std::vector<std::string> feature_names = {});

GammaDist glm_conditional(const GammaGlmModel& model, const Eigen::VectorXd& x);

}  // namespace drn
