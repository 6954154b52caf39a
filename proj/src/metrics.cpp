#include "drn/metrics.hpp"

#include <boost/math/distributions/normal.hpp>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "drn/errors.hpp"

namespace drn {

double crps(const Distribution& dist, double y) { return dist.crps(y); }

double nll_metric(const Distribution& dist, double y) {
  double pdf = dist.pdf(y);
  if (pdf <= 0.0) return std::numeric_limits<double>::infinity();
  return -std::log(pdf);
}

double rmse(std::span<const double> means, std::span<const double> ys) {
  if (means.size() != ys.size()) throw DimensionError("length mismatch");
  if (means.empty()) throw ValidationError("empty score vectors");
  double acc = 0.0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    double d = means[i] - ys[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(means.size()));
}

double quantile_loss(double q_pred, double y, double alpha) {
  double indicator = y <= q_pred ? 1.0 : 0.0;
  return (y - q_pred) * (alpha - indicator);
}

std::vector<double> pit_values(std::span<const Distribution* const> dists,
                               std::span<const double> y) {
  if (dists.size() != y.size()) throw DimensionError("length mismatch");
  std::vector<double> u(dists.size());
  for (std::size_t i = 0; i < dists.size(); ++i) u[i] = dists[i]->cdf(y[i]);
  return u;
}

std::vector<double> quantile_residuals(std::span<const double> pit) {
  boost::math::normal_distribution<double> norm;
  std::vector<double> r(pit.size());
  for (std::size_t i = 0; i < pit.size(); ++i) {
    double u = std::min(std::max(pit[i], 1e-10), 1.0 - 1e-10);
    r[i] = boost::math::quantile(norm, u);
  }
  return r;
}

std::vector<CalibrationPoint> calibration_curve(std::span<const double> pit,
                                                std::span<const double> levels) {
  if (pit.empty()) throw ValidationError("empty PIT vector");
  std::vector<CalibrationPoint> curve;
  curve.reserve(levels.size());
  for (double p : levels) {
    double count = 0.0;
    for (double u : pit)
      if (u <= p) count += 1.0;
    curve.push_back({p, count / static_cast<double>(pit.size())});
  }
  return curve;
}

double calibration_score(std::span<const double> pit) {
  std::vector<double> levels(99);
  for (int i = 0; i < 99; ++i) levels[static_cast<std::size_t>(i)] = (i + 1) / 100.0;
  auto curve = calibration_curve(pit, levels);
  double acc = 0.0;
  for (const auto& pt : curve) {
    double d = pt.empirical - pt.nominal;
    acc += d * d;
  }
  return acc / static_cast<double>(curve.size());
}

double wilcoxon_signed_rank(std::span<const double> a,
                            std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("paired samples differ in length");
  if (a.size() < 10) throw ValidationError("signed-rank test needs n >= 10");

  std::vector<double> d;
  d.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    double diff = a[i] - b[i];
    if (diff != 0.0) d.push_back(diff);
  }
  if (d.empty())
    throw ValidationError("signed-rank test undefined: all differences zero");
  const int n = static_cast<int>(d.size());

  // Rank |d| with average ranks for ties; work in doubled units so every
  // rank is an integer.
  std::vector<int> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return std::abs(d[static_cast<std::size_t>(i)]) <
           std::abs(d[static_cast<std::size_t>(j)]);
  });
  std::vector<long> rank2(d.size());  // 2 * rank
  std::vector<long> tie_sizes;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t jmax = i;
    while (jmax + 1 < order.size() &&
           std::abs(d[static_cast<std::size_t>(order[jmax + 1])]) ==
               std::abs(d[static_cast<std::size_t>(order[i])]))
      ++jmax;
    long lo = static_cast<long>(i) + 1, hi = static_cast<long>(jmax) + 1;
    for (std::size_t k = i; k <= jmax; ++k)
      rank2[static_cast<std::size_t>(order[k])] = lo + hi;  // 2 * average rank
    tie_sizes.push_back(hi - lo + 1);
    i = jmax + 1;
  }

  long w2 = 0;  // 2 * W+ (sum of positive-difference ranks)
  for (std::size_t k = 0; k < d.size(); ++k)
    if (d[k] > 0.0) w2 += rank2[k];

  if (n <= 25) {
    // Exact null distribution by dynamic programming over doubled ranks.
    long smax = 0;
    for (long r : rank2) smax += r;
    std::vector<double> ways(static_cast<std::size_t>(smax) + 1, 0.0);
    ways[0] = 1.0;
    for (long r : rank2)
      for (long s = smax; s >= r; --s)
        ways[static_cast<std::size_t>(s)] += ways[static_cast<std::size_t>(s - r)];
    double below = 0.0;
    for (long s = 0; s <= w2; ++s) below += ways[static_cast<std::size_t>(s)];
    return below / std::pow(2.0, n);
  }

  double w = 0.5 * static_cast<double>(w2);
  double mean = n * (n + 1) / 4.0;
  double var = n * (n + 1) * (2.0 * n + 1.0) / 24.0;
  for (long t : tie_sizes)
    var -= static_cast<double>(t * t * t - t) / 48.0;
  double z = (w - mean + 0.5) / std::sqrt(var);
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

std::string significance_stars(double p_value) {
  if (p_value < 0.001) return "***";
  if (p_value < 0.01) return "**";
  if (p_value < 0.05) return "*";
  return "";
}

namespace {
double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw ValidationError("empty score vector");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}
}  // namespace

double ModelScores::mean_crps() const { return mean_of(crps); }
double ModelScores::mean_nll() const { return mean_of(nll); }
double ModelScores::mean_ql() const { return mean_of(ql); }
double ModelScores::rmse() const {
  if (sq_err.empty()) throw ValidationError("empty score vector");
  return std::sqrt(mean_of(sq_err));
}

}  // namespace drn
