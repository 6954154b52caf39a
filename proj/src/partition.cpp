#include "drn/partition.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "drn/errors.hpp"

namespace drn {

int Partition::interval_of(double y) const {
  if (y < cutpoints.front() || y >= cutpoints.back()) return -1;
  auto it = std::upper_bound(cutpoints.begin(), cutpoints.end(), y);
  return static_cast<int>(it - cutpoints.begin()) - 1;
}

void Partition::validate() const {
  if (cutpoints.size() < 2)
    throw ValidationError("partition needs at least two cutpoints");
  for (std::size_t i = 0; i + 1 < cutpoints.size(); ++i) {
    if (!std::isfinite(cutpoints[i]) || !(cutpoints[i] < cutpoints[i + 1]))
      throw ValidationError("cutpoints must be finite and strictly increasing");
  }
  if (!std::isfinite(cutpoints.back()))
    throw ValidationError("cutpoints must be finite and strictly increasing");
}

std::pair<double, double> refinement_bounds(std::span<const double> y_train,
                                            double lower_margin,
                                            double upper_margin) {
  if (y_train.empty()) throw ValidationError("empty training response");
  if (lower_margin < 0.0 || upper_margin < 0.0)
    throw ValidationError("margins must be nonnegative");
  auto [mn_it, mx_it] = std::minmax_element(y_train.begin(), y_train.end());
  double mn = *mn_it, mx = *mx_it;
  if (mn == mx)
    throw ValidationError("degenerate response range (min == max)");
  double range = mx - mn;
  double c0 = mn > 0.0 ? mn * (1.0 - lower_margin) : mn - lower_margin * range;
  double cK = mx > 0.0 ? mx * (1.0 + upper_margin) : mx + upper_margin * range;
  return {c0, cK};
}

Partition uniform_cutpoints(double c0, double cK, double proportion) {
  if (!(c0 < cK)) throw ValidationError("need c0 < cK");
  if (!(proportion > 0.0 && proportion <= 1.0))
    throw ValidationError("cutpoint proportion must lie in (0, 1]");
  int K = static_cast<int>(std::ceil(1.0 / proportion));
  Partition p;
  p.cutpoints.resize(static_cast<std::size_t>(K) + 1);
  for (int k = 0; k <= K; ++k)
    p.cutpoints[static_cast<std::size_t>(k)] = c0 + k * (cK - c0) / K;
  p.cutpoints.back() = cK;
  p.validate();
  return p;
}

Partition merge_cutpoints(const Partition& raw, std::span<const double> y_train,
                          int min_obs) {
  raw.validate();
  if (min_obs < 1) throw ValidationError("min_obs must be >= 1");

  std::vector<double> sorted(y_train.begin(), y_train.end());
  std::sort(sorted.begin(), sorted.end());
  auto count_in = [&](double lo, double hi) {  // [lo, hi)
    return std::lower_bound(sorted.begin(), sorted.end(), hi) -
           std::lower_bound(sorted.begin(), sorted.end(), lo);
  };

  const auto& c = raw.cutpoints;
  const std::size_t K_raw = c.size() - 1;
  Partition merged;
  merged.cutpoints.push_back(c[0]);
  std::size_t left = 0;
  for (std::size_t right = 1; right < K_raw; ++right) {
    auto left_count = count_in(c[left], c[right]);
    auto right_count = count_in(c[right], c[K_raw]);
    if (left_count >= min_obs && right_count >= min_obs) {
      merged.cutpoints.push_back(c[right]);
      left = right;
    }
  }
  merged.cutpoints.push_back(c[K_raw]);
  merged.validate();
  return merged;
}

}  // namespace drn
