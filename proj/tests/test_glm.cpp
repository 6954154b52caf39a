#include <doctest.h>

#include <cmath>

#include "drn/errors.hpp"
#include "drn/glm.hpp"
#include "drn/rng.hpp"

using namespace drn;

TEST_SUITE("glm") {

TEST_CASE("intercept-only fit recovers log of the sample mean") {
  Eigen::MatrixXd X(3, 0);
  Eigen::VectorXd y(3);
  y << 1.0, 2.0, 3.0;
  GammaGlmModel m = fit_gamma_glm(X, y);
  CHECK(m.beta.size() == 1);
  CHECK(m.beta(0) == doctest::Approx(std::log(2.0)).epsilon(1e-10));
  // Pearson estimator: ((1/4) + 0 + (1/4)) / (3 - 1).
  CHECK(m.dispersion == doctest::Approx(0.25).epsilon(1e-10));
  CHECK(m.converged);
}

TEST_CASE("simulated data recovers coefficients within 3 standard errors") {
  Rng rng(404);
  const int n = 10000, p = 2;
  Eigen::VectorXd beta_true(p + 1);
  beta_true << 0.5, 0.3, -0.4;
  const double phi = 0.5;
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.normal();
    X(i, 1) = rng.normal();
    double mu = std::exp(beta_true(0) + beta_true(1) * X(i, 0) +
                         beta_true(2) * X(i, 1));
    y(i) = rng.gamma(1.0 / phi, mu * phi);
  }
  GammaGlmModel m = fit_gamma_glm(X, y);
  CHECK(m.converged);

  // Asymptotic covariance for the log link: phi * (D'D)^-1 (unit weights).
  Eigen::MatrixXd D(n, p + 1);
  D.col(0).setOnes();
  D.rightCols(p) = X;
  Eigen::MatrixXd cov = m.dispersion * (D.transpose() * D).inverse();
  for (int j = 0; j <= p; ++j) {
    double se = std::sqrt(cov(j, j));
    CHECK(std::abs(m.beta(j) - beta_true(j)) < 3.0 * se);
  }
  CHECK(m.dispersion == doctest::Approx(phi).epsilon(0.1));
}

TEST_CASE("score equations balance at the IRLS fixed point") {
  Rng rng(92);
  const int n = 500;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.normal();
    X(i, 1) = rng.uniform(0.0, 2.0);
    y(i) = rng.gamma(2.0, std::exp(0.2 + 0.5 * X(i, 0)) / 2.0);
  }
  GammaGlmModel m = fit_gamma_glm(X, y);
  Eigen::MatrixXd D(n, 3);
  D.col(0).setOnes();
  D.rightCols(2) = X;
  for (int j = 0; j < 3; ++j) {
    double score = 0.0;
    for (int i = 0; i < n; ++i) {
      double mu = std::exp(D.row(i) * m.beta);
      score += (y(i) - mu) / mu * D(i, j);
    }
    CHECK(std::abs(score) < 1e-6);
  }
}

TEST_CASE("input validation") {
  Eigen::MatrixXd X(5, 1);
  X << 1, 2, 3, 4, 5;
  Eigen::VectorXd y(5);
  y << 1, 2, 3, 4, 0.0;  // non-positive response
  CHECK_THROWS_AS(fit_gamma_glm(X, y), ValidationError);

  y << 1, 2, 3, 4, 5;
  Eigen::MatrixXd Xz = Eigen::MatrixXd::Zero(5, 1);
  CHECK_THROWS_AS(fit_gamma_glm(Xz, y), ValidationError);

  Eigen::MatrixXd Xdup(5, 2);
  Xdup << 1, 1, 2, 2, 3, 3, 4, 4, 5, 5;  // perfectly collinear
  CHECK_THROWS_AS(fit_gamma_glm(Xdup, y), RankError);

  Eigen::MatrixXd Xsmall(2, 1);
  Xsmall << 1, 2;
  Eigen::VectorXd ysmall(2);
  ysmall << 1, 2;
  CHECK_THROWS_AS(fit_gamma_glm(Xsmall, ysmall), ValidationError);
}

TEST_CASE("conditional distribution parameterisation") {
  GammaGlmModel m;
  m.beta = Eigen::VectorXd::Zero(2);
  m.dispersion = 1.0;
  m.feature_names = {"x1"};
  Eigen::VectorXd x(1);
  x << 0.0;

  SUBCASE("unit mean, unit dispersion gives the unit exponential") {
    GammaDist d = glm_conditional(m, x);
    CHECK(d.shape() == 1.0);
    CHECK(d.scale() == 1.0);
  }
  SUBCASE("mean 2, dispersion 0.5 gives shape 2 scale 1") {
    m.beta(0) = std::log(2.0);
    m.dispersion = 0.5;
    GammaDist d = glm_conditional(m, x);
    CHECK(d.shape() == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(d.scale() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(d.mean() == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(d.variance() == doctest::Approx(2.0).epsilon(1e-14));
  }
  SUBCASE("mean matches the link for random coefficients") {
    Rng rng(5);
    m.beta = Eigen::VectorXd(3);
    m.beta << 0.3, -0.7, 0.2;
    m.dispersion = 0.8;
    m.feature_names = {"a", "b"};
    for (int t = 0; t < 10; ++t) {
      Eigen::VectorXd xt(2);
      xt << rng.normal(), rng.normal();
      GammaDist d = glm_conditional(m, xt);
      CHECK(d.mean() ==
            doctest::Approx(std::exp(m.linear_predictor(xt))).epsilon(1e-14));
    }
  }
}

}  // TEST_SUITE
