#pragma once

#include <cmath>

namespace pcix {

// Standard normal CDF via erfc; accurate over the full double range.
inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// Wichura's AS241 rational approximation of the standard normal quantile.
// Absolute error below 1e-15 on (0,1); bit-stable across platforms.
double normal_quantile(double p);

inline double two_sided_pvalue(double statistic) {
  return 2.0 * normal_cdf(-std::fabs(statistic));
}

// Complementary log-log transform of a probability and its inverse.
// theta = log(-log p) is decreasing in p, so interval endpoints swap.
inline double cloglog(double p) { return std::log(-std::log(p)); }
inline double inv_cloglog(double theta) { return std::exp(-std::exp(theta)); }

// d theta / d p = 1 / (p log p); used to move SEs between scales.
inline double cloglog_deriv(double p) { return 1.0 / (p * std::log(p)); }

}  // namespace pcix
