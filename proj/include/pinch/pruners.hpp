#pragma once

#include <vector>

#include "pinch/gates.hpp"
#include "pinch/tensor.hpp"

namespace pinch {

class Encoder;

// Unstructured magnitude pruning: zeros the floor(p * |W|) smallest-magnitude
// entries. Equal magnitudes are pruned lowest flat index first, so the mask
// is a deterministic function of the weights.
HardMask ump_mask(const Tensor& w, double p);

// Per-layer hard-mask sparsities of a gate-trained model, in the model's
// canonical prunable-layer order. Errors if any prunable layer has no gate.
std::vector<double> extract_layer_sparsities(const Encoder& model);

// Applies a per-layer sparsity profile to an uncompressed model by magnitude
// pruning each prunable layer at the given fraction, then freezing the
// masks. Weights are copied untouched; no fine-tuning happens here.
Encoder mixed_sparsity_transfer(const Encoder& uncompressed,
                                const std::vector<double>& sparsities);

}  // namespace pinch
