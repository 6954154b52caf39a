#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "drn/distribution.hpp"

namespace drn {

// Integrated quadratic score of the forecast CDF against the observation.
double crps(const Distribution& dist, double y);

// -ln pdf(y); +inf (not an exception) when the density vanishes at y.
double nll_metric(const Distribution& dist, double y);

double rmse(std::span<const double> means, std::span<const double> ys);

// Pinball loss (y - q)(alpha - 1{y <= q}).
double quantile_loss(double q_pred, double y, double alpha);

// Probability integral transforms u_i = F(y_i).
std::vector<double> pit_values(std::span<const Distribution* const> dists,
                               std::span<const double> y);

// Normal quantile transform of PIT values, clamped to (1e-10, 1-1e-10).
std::vector<double> quantile_residuals(std::span<const double> pit);

struct CalibrationPoint {
  double nominal;
  double empirical;
};

// Empirical fraction of PIT values at or below each nominal level.
std::vector<CalibrationPoint> calibration_curve(std::span<const double> pit,
                                                std::span<const double> levels);

// Mean squared nominal/empirical gap over the 99-point grid 0.01..0.99.
double calibration_score(std::span<const double> pit);

// One-sided paired signed-rank test of a < b on per-observation scores.
// Zero differences are dropped, ties share average ranks; exact distribution
// up to n = 25, normal approximation with continuity correction beyond.
double wilcoxon_signed_rank(std::span<const double> a,
                            std::span<const double> b);

// Stars per the usual 0.05 / 0.01 / 0.001 convention; empty when not
// significant.
std::string significance_stars(double p_value);

// Per-model evaluation scores with the per-observation vectors retained for
// paired tests.
struct ModelScores {
  std::vector<double> crps;
  std::vector<double> nll;
  std::vector<double> ql;
  std::vector<double> sq_err;
  double ql_alpha = 0.9;

  double mean_crps() const;
  double mean_nll() const;
  double mean_ql() const;
  double rmse() const;
};

struct MetricReport {
  std::map<std::string, ModelScores> models;
};

}  // namespace drn
