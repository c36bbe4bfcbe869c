#include <cmath>
#include <vector>

#include "doctest.h"
#include "pinch/gates.hpp"
#include "pinch/rng.hpp"
#include "testutil.hpp"

using namespace pinch;

TEST_CASE("soft mask value at a known operating point") {
  // w = 2, t = 1, tau = 0.5: (w^2 - t^2)/tau = 6, sigmoid(6) = 0.997527...
  Tensor w = Tensor::param({1}, {2.0});
  SelfPinchGate gate = SelfPinchGate::init(1.0, 0.5);
  CHECK(soft_mask(w, gate).m.values()[0] ==
        doctest::Approx(0.99752737684337).epsilon(1e-10));
  // w = t sits exactly on the sigmoid midpoint.
  Tensor weq = Tensor::param({1}, {1.0});
  CHECK(soft_mask(weq, gate).m.values()[0] == 0.5);
}

TEST_CASE("soft and hard masks agree on survival for random draws") {
  Rng rng(42);
  for (double tau : {0.5, 0.1, 0.01}) {
    for (int trial = 0; trial < 100; ++trial) {
      double wv = rng.normal() * 2.0;
      double tv = std::fabs(rng.normal());
      if (wv * wv == tv * tv) continue;  // exact tie handled separately
      Tensor w = Tensor::param({1}, {wv});
      SelfPinchGate gate = SelfPinchGate::init(tv, tau);
      bool soft_keep = soft_mask(w, gate).m.values()[0] >= 0.5;
      bool hard_keep = hard_mask(w, gate).m.values()[0] == 1.0;
      CHECK(soft_keep == hard_keep);
    }
  }
}

TEST_CASE("a weight exactly at the threshold is kept") {
  Tensor w = Tensor::param({2}, {1.0, -1.0});
  SelfPinchGate gate = SelfPinchGate::init(1.0, 0.01);
  CHECK(hard_mask(w, gate).m.values() == std::vector<double>{1.0, 1.0});
  CHECK(ste_round(soft_mask(w, gate).m).values() ==
        std::vector<double>{1.0, 1.0});
}

TEST_CASE("hard mask ignores temperature") {
  Tensor w = Tensor::param({3}, {0.5, 1.5, -2.0});
  SelfPinchGate a = SelfPinchGate::init(1.0, 0.5);
  SelfPinchGate b = SelfPinchGate::init(1.0, 0.001);
  CHECK(hard_mask(w, a).m.values() == hard_mask(w, b).m.values());
  CHECK(hard_mask(w, a).m.values() == std::vector<double>{0.0, 1.0, 1.0});
}

TEST_CASE("layer sparsity is the pruned fraction") {
  Tensor w = Tensor::param({4}, {0.1, 0.2, 3.0, 4.0});
  SelfPinchGate gate = SelfPinchGate::init(1.0, 0.5);
  CHECK(layer_sparsity(hard_mask(w, gate)) == 0.5);
}

TEST_CASE("nonpositive temperature is rejected at mask time") {
  Tensor w = Tensor::param({1}, {1.0});
  SelfPinchGate gate = SelfPinchGate::init(1.0, 0.0);
  CHECK_THROWS_AS(soft_mask(w, gate), ShapeError);
  gate.tau = -0.5;
  CHECK_THROWS_AS(masked_weight(w, gate), ShapeError);
}

TEST_CASE("masked weight zeroes pruned entries in the forward pass") {
  Tensor w = Tensor::param({2, 2}, {0.1, 2.0, -0.2, -3.0});
  SelfPinchGate gate = SelfPinchGate::init(1.0, 0.5);
  Tensor mw = masked_weight(w, gate);
  CHECK(mw.values() == std::vector<double>{0.0, 2.0, 0.0, -3.0});
  CHECK(retained_count(w, gate).item() == 2.0);
}

TEST_CASE("gated_forward equals a dense forward through the masked weight") {
  Tensor x = Tensor::constant({1, 2}, {1.0, 1.0});
  Tensor w = Tensor::param({2, 2}, {0.1, 2.0, -0.2, -3.0});
  Tensor bias = Tensor::param({2}, {10.0, 20.0});
  SelfPinchGate gate = SelfPinchGate::init(1.0, 0.5);
  Tensor y = gated_forward(x, w, bias, gate);
  // masked W rows: (0, 2), (0, -3); y = x W^T + b = (2+10, -3+20)
  CHECK(y.values() == std::vector<double>{12.0, 17.0});
}

TEST_CASE("threshold gradient flows through the soft mask surrogate") {
  Rng rng(5);
  Tensor w = testutil::random_param({3, 3}, rng, -2.0, 2.0);
  SelfPinchGate gate = SelfPinchGate::init(0.8, 0.5);
  Tensor probe = testutil::random_probe({3, 3}, rng);
  auto build = [&] { return testutil::probe_sum(soft_mask(w, gate).m, probe); };
  double err = testutil::max_grad_rel_err(build, {w, gate.t});
  CHECK(err < 1e-5);
}

TEST_CASE("detached masking stops weight gradients from the mask path") {
  Tensor w = Tensor::param({1}, {2.0});
  SelfPinchGate gate = SelfPinchGate::init(1.0, 0.5);
  backward(sum(masked_weight(w, gate, true)));
  CHECK(w.grad()[0] == 1.0);  // only the product path; mask treated as data
  CHECK(gate.t.grad()[0] != 0.0);

  Tensor w2 = Tensor::param({1}, {2.0});
  SelfPinchGate gate2 = SelfPinchGate::init(1.0, 0.5);
  backward(sum(masked_weight(w2, gate2, false)));
  CHECK(w2.grad()[0] != 1.0);  // mask path contributes an extra term
}

TEST_CASE("growing threshold prunes monotonically more weights") {
  Rng rng(9);
  std::vector<double> wv(64);
  for (double& v : wv) v = rng.normal();
  Tensor w = Tensor::constant({64}, wv);
  double prev = -1.0;
  for (double t = 0.0; t <= 2.5; t += 0.25) {
    double s = layer_sparsity(hard_mask(w, SelfPinchGate::init(t, 0.5)));
    CHECK(s >= prev);
    prev = s;
  }
  CHECK(prev > 0.9);
}

TEST_CASE("penalty pressure alone drives the threshold up and prunes") {
  Rng rng(17);
  Tensor w = testutil::random_param({8, 8}, rng, -1.0, 1.0);
  SelfPinchGate gate = SelfPinchGate::init(1e-3, 0.5);
  double initial = layer_sparsity(hard_mask(w, gate));
  double lr = 0.05;
  for (int step = 0; step < 50; ++step) {
    gate.t.zero_grad();
    w.zero_grad();
    backward(retained_count(w, gate));
    gate.t.values_mut()[0] -= lr * gate.t.grad()[0];
  }
  double final_sparsity = layer_sparsity(hard_mask(w, gate));
  CHECK(final_sparsity > initial + 0.2);
  CHECK(gate.t.values()[0] > 1e-3);
}
