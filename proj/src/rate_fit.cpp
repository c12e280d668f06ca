#include "outsup/rate_fit.hpp"

#include <cmath>

#include "outsup/errors.hpp"

namespace outsup {

RateFit fit_rate(std::span<const std::pair<double, double>> points) {
  if (points.size() < 3) throw InvalidInput("fit_rate: need at least three points");
  double sx = 0, sy = 0;
  for (const auto& [n, e] : points) {
    if (!(n > 0.0) || !(e > 0.0) || !std::isfinite(e)) {
      throw InvalidInput("fit_rate: n and error must be positive and finite");
    }
    sx += std::log(n);
    sy += std::log(e);
  }
  const double m = static_cast<double>(points.size());
  const double mx = sx / m, my = sy / m;
  double sxx = 0, sxy = 0;
  for (const auto& [n, e] : points) {
    const double dx = std::log(n) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(e) - my);
  }
  if (sxx == 0.0) throw InvalidInput("fit_rate: all n values are equal");
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss = 0;
  for (const auto& [n, e] : points) {
    const double r = std::log(e) - (fit.intercept + fit.slope * std::log(n));
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / m);
  return fit;
}

}  // namespace outsup
