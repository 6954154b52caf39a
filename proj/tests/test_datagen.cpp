#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "drn/datagen.hpp"
#include "drn/errors.hpp"
#include "drn/numeric.hpp"
#include "drn/rng.hpp"

using namespace drn;

namespace {

// Two-sample Kolmogorov-Smirnov with the asymptotic p-value.
double ks_two_sample_p(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    double fa = static_cast<double>(i) / static_cast<double>(a.size());
    double fb = static_cast<double>(j) / static_cast<double>(b.size());
    d = std::max(d, std::abs(fa - fb));
  }
  double n_eff = static_cast<double>(a.size()) * static_cast<double>(b.size()) /
                 static_cast<double>(a.size() + b.size());
  double lambda = (std::sqrt(n_eff) + 0.12 + 0.11 / std::sqrt(n_eff)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k)
    p += 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::min(1.0, std::max(0.0, p));
}

}  // namespace

TEST_SUITE("datagen") {

TEST_CASE("mean and dispersion functions at the origin") {
  CHECK(synthetic_main_mu(0.0, 0.0) == 1.0);
  CHECK(synthetic_main_phi(0.0, 0.0) == 0.5);
}

TEST_CASE("feature correlation matches the design") {
  SyntheticSplits s = gen_synthetic_main(100000, 1, 1, 33);
  const auto& X = s.train.X;
  double m1 = X.col(0).mean(), m2 = X.col(1).mean();
  double v1 = (X.col(0).array() - m1).square().mean();
  double v2 = (X.col(1).array() - m2).square().mean();
  double cov = ((X.col(0).array() - m1) * (X.col(1).array() - m2)).mean();
  double corr = cov / std::sqrt(v1 * v2);
  CHECK(std::abs(corr - 0.25) < 0.01);
  CHECK(std::sqrt(v1) == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("responses are positive and seed-deterministic") {
  SyntheticSplits a = gen_synthetic_main(500, 200, 200, 7);
  SyntheticSplits b = gen_synthetic_main(500, 200, 200, 7);
  CHECK(a.train.y.minCoeff() > 0.0);
  CHECK((a.train.X - b.train.X).norm() == 0.0);
  CHECK((a.train.y - b.train.y).norm() == 0.0);
  CHECK((a.test.y - b.test.y).norm() == 0.0);

  SyntheticSplits c = gen_synthetic_main(500, 200, 200, 8);
  std::vector<double> ya(a.train.y.data(), a.train.y.data() + 500);
  std::vector<double> yc(c.train.y.data(), c.train.y.data() + 500);
  CHECK(ks_two_sample_p(ya, yc) > 0.01);
}

TEST_CASE("empirical response mean matches its Monte Carlo oracle") {
  const int n = 100000;
  SyntheticSplits s = gen_synthetic_main(n, 1, 1, 11);
  double sample_mean = s.train.y.mean();
  double sample_var = (s.train.y.array() - sample_mean).square().mean();

  // E[Y|X] = mu(X) * (1 + exp(phi(X)^2 / 2)) under the log-sd convention;
  // average it over the generated feature draws.
  double oracle = 0.0;
  for (int i = 0; i < n; ++i) {
    double mu = synthetic_main_mu(s.train.X(i, 0), s.train.X(i, 1));
    double phi = synthetic_main_phi(s.train.X(i, 0), s.train.X(i, 1));
    oracle += mu * (1.0 + std::exp(0.5 * phi * phi));
  }
  oracle /= n;
  double se = std::sqrt(sample_var / n);
  CHECK(std::abs(sample_mean - oracle) < 3.0 * se);
}

TEST_CASE("regression generator properties") {
  SyntheticSplits s = gen_synthetic_reg(1000, 21);
  CHECK(s.train.y.size() == 600);
  CHECK(s.val.y.size() == 200);
  CHECK(s.test.y.size() == 200);

  const int n = 100000;
  SyntheticSplits big = gen_synthetic_reg(n, 5);
  int total = static_cast<int>(big.train.y.size() + big.val.y.size() +
                               big.test.y.size());
  CHECK(total == n);
  // E[Y] = E[-X1 + X2] = 0; bound the error by 3 standard errors.
  double mean = (big.train.y.sum() + big.val.y.sum() + big.test.y.sum()) / total;
  double var = (big.train.y.array() - mean).square().mean();
  CHECK(std::abs(mean) < 3.0 * std::sqrt(var / total));

  // Degenerate conditional sd: the draw collapses to the conditional mean.
  Rng rng(1);
  CHECK(rng.normal(1.5, 0.0) == 1.5);
}

TEST_CASE("true compound distribution") {
  CompoundTrueDistribution d(1.0, 0.5);

  SUBCASE("mean has the closed form mu(1 + exp(phi^2/2))") {
    CHECK(d.mean() == doctest::Approx(1.0 + std::exp(0.125)).epsilon(1e-12));
  }
  SUBCASE("cdf approaches one and the density integrates to it") {
    CHECK(d.cdf(60.0) > 1.0 - 1e-4);
    double mass = adaptive_simpson([&](double y) { return d.pdf(y); }, 1e-9,
                                   30.0, 1e-6);
    CHECK(mass == doctest::Approx(d.cdf(30.0)).epsilon(1e-4));
  }
  SUBCASE("pdf is the cdf derivative") {
    for (double y : {0.8, 1.5, 3.0}) {
      double h = 1e-5;
      double fd = (d.cdf(y + h) - d.cdf(y - h)) / (2.0 * h);
      CHECK(d.pdf(y) == doctest::Approx(fd).epsilon(1e-3));
    }
  }
  SUBCASE("quantile inverts the cdf") {
    for (double alpha : {0.1, 0.5, 0.9}) {
      double q = d.quantile(alpha);
      CHECK(std::abs(d.cdf(q) - alpha) < 1e-6);
    }
  }
  SUBCASE("simulation agrees with the analytic law") {
    Rng rng(2);
    const int n = 100000;
    int below2 = 0;
    for (int i = 0; i < n; ++i) {
      double y = rng.gamma(2.0, 0.5) + rng.lognormal(0.0, 0.5);
      if (y <= 2.0) ++below2;
    }
    double p_hat = static_cast<double>(below2) / n;
    double p_true = d.cdf(2.0);
    double se = std::sqrt(p_true * (1.0 - p_true) / n);
    CHECK(std::abs(p_hat - p_true) < 3.5 * se);
  }
  SUBCASE("a shape below one is handled by substitution") {
    CompoundTrueDistribution heavy(1.0, 1.3);  // gamma shape ~ 0.77
    double mass = adaptive_simpson([&](double y) { return heavy.pdf(y); },
                                   1e-10, 50.0, 1e-6);
    CHECK(mass == doctest::Approx(heavy.cdf(50.0)).epsilon(1e-3));
  }
}

TEST_CASE("generator input validation") {
  CHECK_THROWS_AS(gen_synthetic_main(0, 10, 10, 1), ValidationError);
  CHECK_THROWS_AS(gen_synthetic_reg(2, 1), ValidationError);
}

}  // TEST_SUITE
