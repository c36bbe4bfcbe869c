#pragma once

#include <vector>

namespace pinch {

// Two-tailed tail mass of the standard normal, erfc(|z| / sqrt(2)).
double normal_two_tailed_p(double z);

struct MapssweResult {
  double z = 0.0;
  double p = 1.0;
  bool significant = false;
  // All per-segment differences identical: the normal approximation does not
  // apply. z is then 0 (all-zero differences) or +/-inf.
  bool degenerate = false;
  // Fewer than 30 segments; the z approximation is rough.
  bool small_sample = true;
  int segments = 0;
};

// Matched-pairs sentence-segment word-error test. Takes per-segment error
// counts of two systems over the same segments, forms the paired differences
// Z_i = a_i - b_i, and tests mean(Z) = 0 with z = mean / (sd / sqrt(n)),
// sd the unbiased standard deviation. Significant iff p < alpha. Requires
// equal-length inputs with at least two segments.
MapssweResult mapsswe(const std::vector<int>& errors_a,
                      const std::vector<int>& errors_b, double alpha = 0.05);

}  // namespace pinch
