#include "pinch/stats.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "pinch/errors.hpp"

namespace pinch {

double normal_two_tailed_p(double z) {
  return std::erfc(std::fabs(z) / std::sqrt(2.0));
}

MapssweResult mapsswe(const std::vector<int>& errors_a,
                      const std::vector<int>& errors_b, double alpha) {
  if (errors_a.size() != errors_b.size()) {
    throw ShapeError("mapsswe: segment counts differ, " +
                     std::to_string(errors_a.size()) + " vs " +
                     std::to_string(errors_b.size()));
  }
  const int n = static_cast<int>(errors_a.size());
  if (n < 2) {
    throw ShapeError("mapsswe: need at least two segments, got " +
                     std::to_string(n));
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ShapeError("mapsswe: alpha must lie in (0, 1)");
  }

  double mu = 0.0;
  for (int i = 0; i < n; ++i) mu += errors_a[i] - errors_b[i];
  mu /= n;
  double ss = 0.0;
  for (int i = 0; i < n; ++i) {
    double d = (errors_a[i] - errors_b[i]) - mu;
    ss += d * d;
  }
  double var = ss / (n - 1);

  MapssweResult r;
  r.segments = n;
  r.small_sample = n < 30;
  if (var == 0.0) {
    r.degenerate = true;
    if (mu == 0.0) {
      r.z = 0.0;
      r.p = 1.0;
      r.significant = false;
    } else {
      r.z = std::copysign(std::numeric_limits<double>::infinity(), mu);
      r.p = 0.0;
      r.significant = true;
    }
    return r;
  }
  r.z = mu / std::sqrt(var / n);
  r.p = normal_two_tailed_p(r.z);
  r.significant = r.p < alpha;
  return r;
}

}  // namespace pinch
