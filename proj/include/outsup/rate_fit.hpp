#pragma once

#include <span>
#include <utility>

namespace outsup {

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;  // log(error) at n = 1
  double residual = 0.0;   // root mean squared residual in log space
};

// Least-squares line through (log n, log error). Needs at least three
// points; errors and n must be positive.
RateFit fit_rate(std::span<const std::pair<double, double>> points);

}  // namespace outsup
