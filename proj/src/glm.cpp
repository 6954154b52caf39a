#include "drn/glm.hpp"

#include <cmath>
#include <iostream>

#include "drn/errors.hpp"

namespace drn {

double GammaGlmModel::linear_predictor(const Eigen::VectorXd& x) const {
  if (x.size() + 1 != beta.size())
    throw DimensionError("feature vector length " + std::to_string(x.size()) +
                         " != coefficient arity " + std::to_string(beta.size() - 1));
  return beta(0) + beta.tail(beta.size() - 1).dot(x);
}

GammaGlmModel fit_gamma_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            std::vector<std::string> feature_names) {
  const auto n = X.rows();
  const auto p = X.cols();
  if (y.size() != n) throw DimensionError("response length != design rows");
  if ((y.array() <= 0.0).any())
    throw ValidationError("gamma response must be strictly positive");
  if (n <= p + 1)
    throw ValidationError("need more observations than coefficients");
  for (Eigen::Index j = 0; j < p; ++j)
    if ((X.col(j).array() == 0.0).all())
      throw ValidationError("design column " + std::to_string(j) +
                            " is identically zero");

  Eigen::MatrixXd D(n, p + 1);
  D.col(0).setOnes();
  D.rightCols(p) = X;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
  beta(0) = std::log(y.mean());

  // Log link with V(mu) = mu^2 gives unit working weights, so each IRLS step
  // is an OLS solve on the working response z = eta + (y - mu)/mu.
  int iter = 0;
  bool converged = false;
  Eigen::VectorXd eta = D * beta;
  for (; iter < 100; ++iter) {
    Eigen::VectorXd mu = eta.array().exp();
    Eigen::VectorXd z = eta + ((y - mu).array() / mu.array()).matrix();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
    if (qr.rank() < p + 1)
      throw RankError("weighted normal equations are rank-deficient");
    Eigen::VectorXd beta_new = qr.solve(z);
    double delta = (beta_new - beta).cwiseAbs().maxCoeff();
    beta = beta_new;
    eta = D * beta;
    if (delta < 1e-8) {
      converged = true;
      ++iter;
      break;
    }
  }
  if (!converged)
    std::cerr << "warning: gamma GLM IRLS did not converge in 100 iterations\n";

  Eigen::VectorXd mu = eta.array().exp();
  double pearson = ((y - mu).array() / mu.array()).square().sum() /
                   static_cast<double>(n - p - 1);

  GammaGlmModel model;
  model.beta = beta;
  model.dispersion = pearson;
  model.converged = converged;
  model.irls_iterations = iter;
  if (feature_names.empty()) {
    for (Eigen::Index j = 0; j < p; ++j)
      feature_names.push_back("x" + std::to_string(j + 1));
  }
  if (static_cast<Eigen::Index>(feature_names.size()) != p)
    throw DimensionError("feature name count != design columns");
  model.feature_names = std::move(feature_names);
  return model;
}

GammaDist glm_conditional(const GammaGlmModel& model, const Eigen::VectorXd& x) {
  double mu = model.mean(x);
  return GammaDist(1.0 / model.dispersion, mu * model.dispersion);
}

}  // namespace drn
