#pragma once

#include <span>
#include <utility>
#include <vector>

namespace drn {

// Strictly increasing cutpoints c_0 < ... < c_K delimiting the refinement
// region. Intervals are half-open [c_{k-1}, c_k); the value c_K itself
// belongs to the upper tail.
struct Partition {
  std::vector<double> cutpoints;

  int interval_count() const { return static_cast<int>(cutpoints.size()) - 1; }
  double lower() const { return cutpoints.front(); }
  double upper() const { return cutpoints.back(); }
  double width(int k) const {  // k in 0..K-1
    return cutpoints[static_cast<std::size_t>(k) + 1] -
           cutpoints[static_cast<std::size_t>(k)];
  }
  double midpoint(int k) const {
    return 0.5 * (cutpoints[static_cast<std::size_t>(k)] +
                  cutpoints[static_cast<std::size_t>(k) + 1]);
  }

  // 0-based interval index containing y, or -1 outside [c_0, c_K).
  int interval_of(double y) const;

  void validate() const;
};

// Bounds straddling the observed training range. Positive extremes scale by
// the margin, non-positive ones shift by margin * range.
std::pair<double, double> refinement_bounds(std::span<const double> y_train,
                                            double lower_margin,
                                            double upper_margin);

// ceil(1/proportion) equal-width intervals between the bounds.
Partition uniform_cutpoints(double c0, double cK, double proportion);

// Merge pass keeping an interior cutpoint only when both the interval closed
// off on its left and the remainder [c_right, c_K) hold at least min_obs
// training observations. Endpoints are always kept, so the final interval may
// end up with fewer than min_obs observations.
Partition merge_cutpoints(const Partition& raw, std::span<const double> y_train,
                          int min_obs);

}  // namespace drn
