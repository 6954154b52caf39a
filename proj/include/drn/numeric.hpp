#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace drn {

// Adaptive Simpson quadrature with absolute tolerance. The integrand must be
// finite on [a, b]; kinks are fine, the recursion just subdivides around them.
double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double abs_tol, int max_depth = 40);

// log(sum(exp(v))) without overflow.
double log_sum_exp(const std::vector<double>& v);

// FNV-1a 64-bit over raw bytes; stable across platforms.
std::uint64_t fnv1a(const void* data, std::size_t len);
std::uint64_t fnv1a(const std::string& s);

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace drn
