#include "pinch/pruners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pinch/model.hpp"

namespace pinch {

HardMask ump_mask(const Tensor& w, double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ShapeError("ump_mask: proportion must lie in [0, 1], got " +
                     std::to_string(p));
  }
  const int n = w.size();
  if (n == 0) throw ShapeError("ump_mask: empty weight tensor");
  int k = static_cast<int>(std::floor(p * n));
  k = std::min(k, n);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto& vals = w.values();
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    double ma = std::fabs(vals[a]), mb = std::fabs(vals[b]);
    if (ma != mb) return ma < mb;
    return a < b;  // ties prune the lowest flat index first
  });
  std::vector<double> m(n, 1.0);
  for (int i = 0; i < k; ++i) m[order[i]] = 0.0;
  return HardMask{Tensor::constant(w.shape(), std::move(m))};
}

std::vector<double> extract_layer_sparsities(const Encoder& model) {
  std::vector<double> out;
  for (const PrunableLinear* l : model.prunable()) {
    if (l->attach != Attach::Gate) {
      throw ShapeError(
          "extract_layer_sparsities: layer " + l->name +
          " has no self-pinching gate; profile extraction needs a gate-trained "
          "model");
    }
    out.push_back(layer_sparsity(hard_mask(l->w, l->gate)));
  }
  return out;
}

Encoder mixed_sparsity_transfer(const Encoder& uncompressed,
                                const std::vector<double>& sparsities) {
  Encoder model = uncompressed.clone();
  auto layers = model.prunable();
  if (sparsities.size() != layers.size()) {
    throw ShapeError("mixed_sparsity_transfer: " +
                     std::to_string(sparsities.size()) + " sparsities for " +
                     std::to_string(layers.size()) + " prunable layers");
  }
  for (const PrunableLinear* l : layers) {
    if (l->attach != Attach::None) {
      throw ShapeError("mixed_sparsity_transfer: layer " + l->name +
                       " is already compressed; the donor profile applies to "
                       "an uncompressed model");
    }
  }
  std::vector<Tensor> masks;
  masks.reserve(layers.size());
  for (size_t i = 0; i < layers.size(); ++i) {
    masks.push_back(ump_mask(layers[i]->w, sparsities[i]).m);
  }
  model.attach_fixed_masks(masks);
  return model;
}

}  // namespace pinch
