#pragma once

#include <vector>

#include "pinch/tensor.hpp"

namespace pinch {

// Blank always sits at output index 0; real tokens are 1..V-1.
inline constexpr int kBlank = 0;

// CTC negative log-likelihood of `label` under per-frame log-probabilities
// (frames x vocab, rows need not be exactly normalized; they are treated as
// unnormalized log-scores of an already-softmaxed model head). Forward and
// backward both run in log space; the gradient is the negative posterior
// occupancy of each (frame, symbol) pair. Errors when the label is too long
// for the frame count (repeats need a blank in between) or when a token is
// outside 1..V-1.
Tensor ctc_loss(const Tensor& log_probs, const std::vector<int>& label);

// Frame-wise argmax, collapse runs, drop blanks. Ties pick the lowest index.
std::vector<int> greedy_decode(const Tensor& log_probs);

int edit_distance(const std::vector<int>& a, const std::vector<int>& b);

struct EditStats {
  int errors = 0;
  int ref_len = 0;
  bool rate_defined = false;
  double rate = 0.0;
};

// Levenshtein errors of hyp against ref; the rate is undefined when the
// reference is empty (counts are still returned).
EditStats token_error_rate(const std::vector<int>& hyp,
                           const std::vector<int>& ref);

}  // namespace pinch
