#include <doctest.h>

#include <cmath>
#include <limits>

#include "drn/drn.hpp"
#include "drn/errors.hpp"
#include "drn/numeric.hpp"
#include "drn/rng.hpp"

using namespace drn;

namespace {

// Unit-exponential baseline with cutpoints at prescribed CDF levels, so
// baseline masses are exact by construction: c = -ln(1 - F).
Partition exp_partition(std::initializer_list<double> cdf_levels) {
  Partition p;
  for (double f : cdf_levels) p.cutpoints.push_back(-std::log(1.0 - f));
  p.validate();
  return p;
}

GammaGlmModel unit_exponential_glm() {
  GammaGlmModel m;
  m.beta = Eigen::VectorXd::Zero(3);
  m.dispersion = 1.0;
  m.feature_names = {"x1", "x2"};
  return m;
}

}  // namespace

TEST_SUITE("drn") {

TEST_CASE("ppc transform of the unit exponential") {
  GammaDist expo(1.0, 1.0);
  Partition p;
  p.cutpoints = {0.0, 1.0, 2.0};
  PpcDensity ppc = ppc_transform(expo, p);
  const double e1 = std::exp(-1.0), e2 = std::exp(-2.0);
  CHECK(ppc.levels(0) == doctest::Approx(1.0 - e1).epsilon(1e-12));
  CHECK(ppc.levels(1) == doctest::Approx(e1 - e2).epsilon(1e-12));

  // Inside the region the density is the level, outside it is the baseline.
  CHECK(ppc(0.5) == doctest::Approx(1.0 - e1).epsilon(1e-12));
  CHECK(ppc(3.0) == expo.pdf(3.0));

  // Levels times widths telescope to the region mass.
  double mass = 0.0;
  for (int k = 0; k < p.interval_count(); ++k) mass += ppc.levels(k) * p.width(k);
  CHECK(mass == doctest::Approx(expo.cdf(2.0) - expo.cdf(0.0)).epsilon(1e-12));
}

TEST_CASE("ppc of one wide interval is near 1/width") {
  GammaDist g(4.0, 0.05);  // essentially all mass below 2
  Partition p;
  p.cutpoints = {0.0, 2.0};
  PpcDensity ppc = ppc_transform(g, p);
  CHECK(ppc.levels(0) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("baseline masses") {
  GammaDist expo(1.0, 1.0);
  SUBCASE("closed-form exponential masses") {
    Partition p;
    p.cutpoints = {0.0, 1.0, 2.0};
    Eigen::VectorXd b = baseline_masses(expo, p);
    CHECK(b(0) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
    CHECK(b(1) ==
          doctest::Approx(std::exp(-1.0) - std::exp(-2.0)).epsilon(1e-12));
  }
  SUBCASE("region far outside the support carries no mass") {
    Partition p;
    p.cutpoints = {200.0, 210.0, 220.0};
    Eigen::VectorXd b = baseline_masses(expo, p);
    CHECK(b.maxCoeff() == 0.0);
  }
  SUBCASE("masses telescope to the region mass") {
    Rng rng(8);
    for (int t = 0; t < 20; ++t) {
      GammaDist g(rng.uniform(0.5, 4.0), rng.uniform(0.3, 2.0));
      Partition p = uniform_cutpoints(0.1, rng.uniform(2.0, 8.0),
                                      1.0 / (2 + rng.uniform_int(20)));
      Eigen::VectorXd b = baseline_masses(g, p);
      CHECK(b.sum() == doctest::Approx(g.cdf(p.upper()) - g.cdf(p.lower()))
                           .epsilon(1e-12));
    }
  }
}

TEST_CASE("adjustment factors") {
  SUBCASE("constant logits leave the baseline untouched") {
    Eigen::VectorXd b(3);
    b << 0.2, 0.5, 0.1;
    Eigen::VectorXd l = Eigen::VectorXd::Constant(3, 1.7);
    Eigen::VectorXd a = adjustment_factors(l, b, b.sum());
    for (int k = 0; k < 3; ++k)
      CHECK(a(k) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("hand-evaluated two-interval case") {
    Eigen::VectorXd b(2), l(2);
    b << 0.6, 0.3;
    l << std::log(2.0), 0.0;
    Eigen::VectorXd a = adjustment_factors(l, b, 0.9);
    CHECK(a(0) == doctest::Approx(1.2).epsilon(1e-12));
    CHECK(a(1) == doctest::Approx(0.6).epsilon(1e-12));
    // Refined masses recover the region mass.
    CHECK((a.array() * b.array()).sum() == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(a(0) * b(0) == doctest::Approx(0.72).epsilon(1e-12));
    CHECK(a(1) * b(1) == doctest::Approx(0.18).epsilon(1e-12));
  }
  SUBCASE("degenerate baseline is rejected") {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd l = Eigen::VectorXd::Zero(2);
    CHECK_THROWS_AS(adjustment_factors(l, b, 0.0), ValidationError);
  }
}

TEST_CASE("refined distribution against exponential bookkeeping") {
  // Cutpoints at CDF levels 0.05 / 0.65 / 0.95 of the unit exponential give
  // baseline masses (0.6, 0.3); logits (ln 2, 0) then give masses
  // (0.72, 0.18) exactly as in the adjustment-factor case.
  GammaDist expo(1.0, 1.0);
  Partition part = exp_partition({0.05, 0.65, 0.95});
  Eigen::VectorXd logits(2);
  logits << std::log(2.0), 0.0;
  RefinedDistribution rd(part, expo, logits);

  const double f0 = 0.05, m1 = 0.72, m2 = 0.18;
  const double w1 = part.width(0), w2 = part.width(1);

  CHECK(rd.cdf_at_lower() == doctest::Approx(f0).epsilon(1e-12));
  CHECK(rd.region_mass() == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(rd.masses()(0) == doctest::Approx(m1).epsilon(1e-12));
  CHECK(rd.masses()(1) == doctest::Approx(m2).epsilon(1e-12));

  SUBCASE("pdf is mass over width inside, baseline outside") {
    double y1 = part.cutpoints[0] + 0.3 * w1;
    CHECK(rd.pdf(y1) == doctest::Approx(m1 / w1).epsilon(1e-12));
    double below = 0.5 * part.cutpoints[0];
    CHECK(rd.pdf(below) == expo.pdf(below));  // exact tail identity
    double above = part.upper() + 1.0;
    CHECK(rd.pdf(above) == expo.pdf(above));
  }

  SUBCASE("cdf accumulates linearly") {
    double y = part.cutpoints[0] + 0.5 * w1;
    CHECK(rd.cdf(y) == doctest::Approx(f0 + 0.5 * m1).epsilon(1e-12));
    double y2 = part.cutpoints[1] + 0.25 * w2;
    CHECK(rd.cdf(y2) == doctest::Approx(f0 + m1 + 0.25 * m2).epsilon(1e-12));
    CHECK(rd.cdf(part.upper()) == expo.cdf(part.upper()));
    CHECK(rd.cdf(-1.0) == 0.0);
    CHECK(rd.cdf(std::numeric_limits<double>::infinity()) == 1.0);
  }

  SUBCASE("quantile inverts the cdf") {
    double alpha = f0 + 0.5 * m1;
    CHECK(rd.quantile(alpha) ==
          doctest::Approx(part.cutpoints[0] + 0.5 * w1).epsilon(1e-12));
    for (int i = 1; i < 100; ++i) {
      double a = i / 100.0;
      CHECK(std::abs(rd.cdf(rd.quantile(a)) - a) < 1e-9);
    }
    // Below the region the gamma quantile applies.
    CHECK(rd.quantile(0.01) == doctest::Approx(expo.quantile(0.01)).epsilon(1e-12));
  }

  SUBCASE("adjustments are masses over baseline masses") {
    Eigen::VectorXd a = rd.adjustments();
    CHECK(a(0) == doctest::Approx(1.2).epsilon(1e-12));
    CHECK(a(1) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(rd.floored_intervals() == 0);
  }

  SUBCASE("density integrates to one") {
    double region = rd.masses().sum();
    double lower = adaptive_simpson([&](double t) { return expo.pdf(t); }, 0.0,
                                    part.lower(), 1e-10);
    double upper = adaptive_simpson([&](double t) { return expo.pdf(t); },
                                    part.upper(), expo.quantile(1.0 - 1e-13),
                                    1e-10);
    CHECK(region + lower + upper == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("uniform single interval has exact uniform moments") {
  GammaDist g(4.0, 0.05);  // P(Y >= 2) ~ 4e-13
  Partition p;
  p.cutpoints = {0.0, 2.0};
  RefinedDistribution rd(p, g, Eigen::VectorXd::Zero(1));
  CHECK(rd.mean() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(rd.variance() == doctest::Approx(1.0 / 3.0).epsilon(1e-8));
}

TEST_CASE("variance is nonnegative over random refinements") {
  Rng rng(99);
  for (int t = 0; t < 50; ++t) {
    GammaDist g(rng.uniform(0.5, 5.0), rng.uniform(0.2, 2.0));
    Partition p = uniform_cutpoints(0.05, rng.uniform(1.0, 6.0),
                                    1.0 / (2 + rng.uniform_int(15)));
    Eigen::VectorXd logits(p.interval_count());
    for (int k = 0; k < logits.size(); ++k) logits(k) = rng.normal() * 2.0;
    RefinedDistribution rd(p, g, logits);
    CHECK(rd.variance() >= 0.0);
    CHECK(rd.masses().minCoeff() >= 0.0);
    CHECK(rd.masses().sum() ==
          doctest::Approx(rd.region_mass()).epsilon(1e-10));
  }
}

TEST_CASE("midpoint bias of the constant-logit mean shrinks quadratically") {
  GammaDist g(2.0, 1.0);
  auto mean_error = [&](int k_intervals) {
    Partition p = uniform_cutpoints(g.quantile(1e-9), g.quantile(1.0 - 1e-9),
                                    1.0 / k_intervals);
    RefinedDistribution rd(p, g, Eigen::VectorXd::Zero(p.interval_count()));
    return std::abs(rd.mean() - g.mean());
  };
  double coarse = mean_error(50);
  double fine = mean_error(100);
  CHECK(fine < 1e-3);
  // Midpoint-rule bias: halving the width divides the error by about four.
  CHECK(fine < coarse / 2.5);
}

TEST_CASE("logit shift invariance") {
  GammaDist expo(1.0, 1.0);
  Partition part = exp_partition({0.02, 0.3, 0.6, 0.9});
  Rng rng(17);
  Eigen::VectorXd logits(3);
  logits << rng.normal(), rng.normal(), rng.normal();
  RefinedDistribution rd1(part, expo, logits);
  RefinedDistribution rd2(part, expo,
                          logits + Eigen::VectorXd::Constant(3, 123.456));
  for (int k = 0; k < 3; ++k)
    CHECK(std::abs(rd1.masses()(k) - rd2.masses()(k)) < 1e-12);
}

TEST_CASE("forward pass composition") {
  GammaGlmModel glm = unit_exponential_glm();
  Partition part = exp_partition({0.05, 0.3, 0.6, 0.9});

  DrnModel model;
  model.baseline = glm;
  model.partition = part;
  model.net = MlpParams::zeros({2, 4, 3});

  Eigen::VectorXd x(2);
  x << 0.3, -0.4;

  SUBCASE("zero network reproduces the PPC baseline") {
    RefinedDistribution rd = drn_forward(model, x);
    Eigen::VectorXd a = rd.adjustments();
    for (int k = 0; k < a.size(); ++k)
      CHECK(a(k) == doctest::Approx(1.0).epsilon(1e-12));
    // CDF at every cutpoint matches the baseline CDF.
    GammaDist base = glm_conditional(glm, x);
    for (int k = 0; k <= 3; ++k)
      CHECK(rd.cdf_at_cutpoint(k) ==
            doctest::Approx(base.cdf(part.cutpoints[static_cast<std::size_t>(k)]))
                .epsilon(1e-12));
  }

  SUBCASE("raising one logit moves mass into that interval only") {
    Rng rng(4);
    MlpParams net = MlpParams::init(2, 1, 4, 3, rng);
    model.net = net;
    RefinedDistribution before = drn_forward(model, x);
    model.net.biases[1](1) += 0.5;  // bump the raw output of interval 1
    RefinedDistribution after = drn_forward(model, x);
    CHECK(after.masses()(1) > before.masses()(1));
    CHECK(after.masses()(0) < before.masses()(0));
    CHECK(after.masses()(2) < before.masses()(2));
  }

  SUBCASE("batch forward equals per-instance forward") {
    Rng rng(12);
    model.net = MlpParams::init(2, 2, 8, 3, rng);
    Eigen::MatrixXd X(6, 2);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 2; ++j) X(i, j) = rng.normal();
    auto batch = drn_forward_batch(model, X);
    for (int i = 0; i < 6; ++i) {
      RefinedDistribution single = drn_forward(model, X.row(i).transpose());
      for (int k = 0; k < 3; ++k)
        CHECK(std::abs(batch[static_cast<std::size_t>(i)].masses()(k) -
                       single.masses()(k)) < 1e-12);
    }
  }
}

TEST_CASE("width mismatch rejected") {
  GammaDist expo(1.0, 1.0);
  Partition part = exp_partition({0.05, 0.5, 0.9});
  CHECK_THROWS_AS(RefinedDistribution(part, expo, Eigen::VectorXd::Zero(5)),
                  DimensionError);
}

}  // TEST_SUITE
