#include "pinch/gates.hpp"

#include <string>

namespace pinch {

SelfPinchGate SelfPinchGate::init(double t0, double tau) {
  SelfPinchGate g;
  g.t = Tensor::param({1}, {t0});
  g.tau = tau;
  return g;
}

namespace {

void check_gate(const char* op, const SelfPinchGate& gate) {
  if (!gate.t.defined() || gate.t.size() != 1) {
    throw ShapeError(std::string(op) + ": gate threshold must be a scalar");
  }
}

Tensor soft_mask_impl(const char* op, const Tensor& w,
                      const SelfPinchGate& gate) {
  check_gate(op, gate);
  if (!(gate.tau > 0.0)) {
    throw ShapeError(std::string(op) + ": tau must be positive, got " +
                     std::to_string(gate.tau));
  }
  Tensor w2 = mul(w, w);
  Tensor t2 = mul(gate.t, gate.t);
  return sigmoid(scale(broadcast_sub(w2, t2), 1.0 / gate.tau));
}

}  // namespace

SoftMask soft_mask(const Tensor& w, const SelfPinchGate& gate) {
  return SoftMask{soft_mask_impl("soft_mask", w, gate)};
}

HardMask hard_mask(const Tensor& w, const SelfPinchGate& gate) {
  check_gate("hard_mask", gate);
  double t = gate.t.values()[0];
  double t2 = t * t;
  std::vector<double> out(w.values().size());
  for (size_t i = 0; i < out.size(); ++i) {
    double v = w.values()[i];
    out[i] = (v * v >= t2) ? 1.0 : 0.0;
  }
  return HardMask{Tensor::constant(w.shape(), std::move(out))};
}

double layer_sparsity(const HardMask& mask) {
  if (!mask.m.defined() || mask.m.size() == 0) {
    throw ShapeError("layer_sparsity: empty mask");
  }
  int zeros = 0;
  for (double v : mask.m.values()) {
    if (v == 0.0) ++zeros;
  }
  return static_cast<double>(zeros) / mask.m.size();
}

Tensor masked_weight(const Tensor& w, const SelfPinchGate& gate,
                     bool detach_mask_weights) {
  Tensor wm = detach_mask_weights ? detach(w) : w;
  Tensor m = soft_mask_impl("masked_weight", wm, gate);
  return mul(w, ste_round(m));
}

Tensor retained_count(const Tensor& w, const SelfPinchGate& gate,
                      bool detach_mask_weights) {
  Tensor wm = detach_mask_weights ? detach(w) : w;
  Tensor m = soft_mask_impl("retained_count", wm, gate);
  return sum(ste_round(m));
}

Tensor gated_forward(const Tensor& x, const Tensor& w, const Tensor& bias,
                     const SelfPinchGate& gate, bool detach_mask_weights) {
  Tensor wbar = masked_weight(w, gate, detach_mask_weights);
  return add_rowbias(matmul(x, transpose(wbar)), bias);
}

}  // namespace pinch
