#include "drn/datagen.hpp"

#include <cmath>

#include "drn/errors.hpp"
#include "drn/numeric.hpp"
#include "drn/rng.hpp"

namespace drn {

double synthetic_main_mu(double x1, double x2) { return std::exp(-x1 + x2); }

double synthetic_main_phi(double x1, double x2) {
  return std::exp(x1) / (1.0 + std::exp(x1 * x2));
}

namespace {

Dataset make_dataset(int n, const char* split, std::uint64_t seed, int p) {
  Dataset ds;
  ds.X.resize(n, p);
  ds.y.resize(n);
  ds.split = split;
  ds.seed = seed;
  for (int j = 0; j < p; ++j)
    ds.feature_names.push_back("x" + std::to_string(j + 1));
  return ds;
}

void fill_main(Dataset& ds, Rng& rng) {
  const double sd = 0.25, rho = 0.25;
  const double rho_c = std::sqrt(1.0 - rho * rho);
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i) {
    double z1 = rng.normal();
    double z2 = rng.normal();
    double x1 = sd * z1;
    double x2 = sd * (rho * z1 + rho_c * z2);
    double mu = synthetic_main_mu(x1, x2);
    double phi = synthetic_main_phi(x1, x2);
    double gamma_part = rng.gamma(1.0 / phi, mu * phi);
    double lognormal_part = rng.lognormal(std::log(mu), phi);
    ds.X(i, 0) = x1;
    ds.X(i, 1) = x2;
    ds.y(i) = gamma_part + lognormal_part;
  }
}

}  // namespace

SyntheticSplits gen_synthetic_main(int n_train, int n_val, int n_test,
                                   std::uint64_t seed) {
  if (n_train < 1 || n_val < 1 || n_test < 1)
    throw ValidationError("split sizes must be positive");
  Rng rng(seed);
  SyntheticSplits s;
  s.train = make_dataset(n_train, "train", seed, 2);
  s.val = make_dataset(n_val, "val", seed, 2);
  s.test = make_dataset(n_test, "test", seed, 2);
  fill_main(s.train, rng);
  fill_main(s.val, rng);
  fill_main(s.test, rng);
  return s;
}

SyntheticSplits gen_synthetic_reg(int n, std::uint64_t seed) {
  if (n < 5) throw ValidationError("need at least 5 observations");
  Rng rng(seed);
  int n_train = static_cast<int>(std::round(0.6 * n));
  int n_val = static_cast<int>(std::round(0.2 * n));
  int n_test = n - n_train - n_val;

  SyntheticSplits s;
  s.train = make_dataset(n_train, "train", seed, 2);
  s.val = make_dataset(n_val, "val", seed, 2);
  s.test = make_dataset(n_test, "test", seed, 2);
  for (Dataset* ds : {&s.train, &s.val, &s.test}) {
    for (Eigen::Index i = 0; i < ds->X.rows(); ++i) {
      double x1 = rng.normal(0.0, 0.5);
      double x2 = rng.normal(0.0, 0.5);
      double sd = 0.5 * (x1 * x1 + x2 * x2);
      ds->X(i, 0) = x1;
      ds->X(i, 1) = x2;
      ds->y(i) = rng.normal(-x1 + x2, sd);
    }
  }
  return s;
}

namespace {

double lognormal_pdf(double u, double log_mean, double log_sd) {
  if (u <= 0.0) return 0.0;
  double z = (std::log(u) - log_mean) / log_sd;
  return std::exp(-0.5 * z * z) / (u * log_sd * std::sqrt(2.0 * M_PI));
}

double lognormal_cdf(double u, double log_mean, double log_sd) {
  if (u <= 0.0) return 0.0;
  double z = (std::log(u) - log_mean) / log_sd;
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

}  // namespace

CompoundTrueDistribution::CompoundTrueDistribution(double mu, double phi)
    : mu_(mu), phi_(phi), gamma_(1.0 / phi, mu * phi) {
  if (!(mu > 0.0) || !(phi > 0.0))
    throw ValidationError("compound distribution needs mu > 0 and phi > 0");
}

// Convolution integrals over the gamma component. The integration range is
// segmented at gamma quantile knots so the quadrature cannot step over the
// concentrated mass; when the gamma shape drops below 1 the integrable
// singularity at 0 is removed by the substitution t = b * u^(1/shape) on the
// first segment.
double CompoundTrueDistribution::convolve(
    double y, const std::function<double(double)>& lognormal_factor) const {
  if (y <= 0.0) return 0.0;
  const double shape = gamma_.shape();

  std::vector<double> knots{0.0};
  for (double q : {1e-8, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0 - 1e-8, 1.0 - 1e-13}) {
    double t = gamma_.quantile(q);
    if (t < y && t > knots.back()) knots.push_back(t);
  }
  knots.push_back(y);

  auto integrand = [&](double t) {
    return gamma_.pdf(t) * lognormal_factor(y - t);
  };

  double total = 0.0;
  const double tol = 1e-7 / static_cast<double>(knots.size());
  for (std::size_t s = 0; s + 1 < knots.size(); ++s) {
    double a = knots[s], b = knots[s + 1];
    if (!(b > a)) continue;
    if (a == 0.0 && shape < 1.0) {
      const double inv_shape = 1.0 / shape;
      total += adaptive_simpson(
          [&](double u) {
            if (u <= 0.0) return 0.0;
            double t = b * std::pow(u, inv_shape);
            return integrand(t) * b * inv_shape * std::pow(u, inv_shape - 1.0);
          },
          0.0, 1.0, tol);
    } else {
      total += adaptive_simpson(integrand, a, b, tol);
    }
  }
  return total;
}

double CompoundTrueDistribution::pdf(double y) const {
  const double log_mu = std::log(mu_);
  return convolve(
      y, [&](double u) { return lognormal_pdf(u, log_mu, phi_); });
}

double CompoundTrueDistribution::cdf(double y) const {
  const double log_mu = std::log(mu_);
  return convolve(
      y, [&](double u) { return lognormal_cdf(u, log_mu, phi_); });
}

double CompoundTrueDistribution::quantile(double alpha) const {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("quantile level must lie in (0,1)");
  double hi = mean() * 4.0 + 1.0;
  return bisect_quantile(*this, alpha, 0.0, hi, 1e-8);
}

double CompoundTrueDistribution::mean() const {
  return mu_ * (1.0 + std::exp(0.5 * phi_ * phi_));
}

CompoundTrueDistribution synthetic_main_true_dist(double x1, double x2) {
  return CompoundTrueDistribution(synthetic_main_mu(x1, x2),
                                  synthetic_main_phi(x1, x2));
}

}  // namespace drn
