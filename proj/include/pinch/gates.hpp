#pragma once

#include "pinch/tensor.hpp"

namespace pinch {

// Learnable layer-level pruning gate. `t` is a scalar threshold living on
// the same scale as the weights; `tau` is the shared temperature schedule
// value (not learnable) and must stay strictly positive.
struct SelfPinchGate {
  Tensor t;
  double tau = 0.5;

  static SelfPinchGate init(double t0, double tau = 0.5);
};

struct SoftMask {
  Tensor m;  // entries in (0, 1), same shape as the gated weight
};

struct HardMask {
  Tensor m;  // constant 0/1 tensor, same shape as the gated weight
};

// Differentiable mask sigmoid((W*W - t*t) / tau). Gradients flow to both the
// weights and the threshold through the squared terms. tau <= 0 is an error.
SoftMask soft_mask(const Tensor& w, const SelfPinchGate& gate);

// Binary keep/drop decision W*W >= t*t. Off the tape, independent of tau.
// Ties (W*W == t*t) keep the weight, matching ste_round(soft_mask) exactly.
HardMask hard_mask(const Tensor& w, const SelfPinchGate& gate);

// Fraction of zeros in a hard mask.
double layer_sparsity(const HardMask& mask);

// W masked by ste_round(soft_mask(W, gate)): forward sees the binary mask,
// backward treats the rounding as identity. With detach_mask_weights the
// mask is computed from a detached copy of W, so W receives gradient only
// through the product while t still learns.
Tensor masked_weight(const Tensor& w, const SelfPinchGate& gate,
                     bool detach_mask_weights = false);

// Number of retained weights as a tape scalar: forward equals the exact
// count of ones in the hard mask, backward is the straight-through
// surrogate. This is the per-layer term of the sparsity penalty.
Tensor retained_count(const Tensor& w, const SelfPinchGate& gate,
                      bool detach_mask_weights = false);

// x * masked_weight(W)^T + bias for row-major activations x.
Tensor gated_forward(const Tensor& x, const Tensor& w, const Tensor& bias,
                     const SelfPinchGate& gate,
                     bool detach_mask_weights = false);

}  // namespace pinch
