#include <cmath>
#include <vector>

#include "doctest.h"
#include "pinch/model.hpp"
#include "pinch/pruners.hpp"
#include "pinch/rng.hpp"
#include "testutil.hpp"

using namespace pinch;

namespace {

int zeros_in(const std::vector<double>& v) {
  int z = 0;
  for (double x : v) {
    if (x == 0.0) ++z;
  }
  return z;
}

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.blocks = 1;
  cfg.width = 8;
  cfg.ffn_width = 16;
  cfg.heads = 2;
  cfg.vocab = 5;
  cfg.feat_dim = 4;
  return cfg;
}

}  // namespace

TEST_CASE("ump prunes exactly floor(p * n) weights") {
  Rng rng(1);
  Tensor w = testutil::random_param({10}, rng);
  CHECK(zeros_in(ump_mask(w, 0.0).m.values()) == 0);
  CHECK(zeros_in(ump_mask(w, 0.5).m.values()) == 5);
  CHECK(zeros_in(ump_mask(w, 0.55).m.values()) == 5);
  CHECK(zeros_in(ump_mask(w, 0.59).m.values()) == 5);
  CHECK(zeros_in(ump_mask(w, 1.0).m.values()) == 10);
  CHECK_THROWS_AS(ump_mask(w, -0.1), ShapeError);
  CHECK_THROWS_AS(ump_mask(w, 1.1), ShapeError);
}

TEST_CASE("ump ties prune the lowest flat index first") {
  Tensor w = Tensor::constant({4}, {1.0, -1.0, 1.0, 1.0});
  CHECK(ump_mask(w, 0.5).m.values() == std::vector<double>{0.0, 0.0, 1.0, 1.0});
}

TEST_CASE("every surviving weight outweighs every pruned one") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor w = testutil::random_param({6, 8}, rng);
    double p = 0.1 + 0.8 * rng.uniform();
    HardMask mask = ump_mask(w, p);
    double max_pruned = -1.0, min_kept = 1e300;
    for (int i = 0; i < w.size(); ++i) {
      double mag = std::fabs(w.values()[i]);
      if (mask.m.values()[i] == 0.0) {
        max_pruned = std::max(max_pruned, mag);
      } else {
        min_kept = std::min(min_kept, mag);
      }
    }
    CHECK(max_pruned <= min_kept);
  }
}

TEST_CASE("ump hits every decile target within one weight") {
  Rng rng(3);
  Tensor w = testutil::random_param({13, 11}, rng);
  const double n = w.size();
  for (int d = 1; d <= 9; ++d) {
    double target = d / 10.0;
    double achieved = zeros_in(ump_mask(w, target).m.values()) / n;
    CHECK(std::fabs(achieved - target) < 1.0 / n);
  }
}

TEST_CASE("profile extraction needs gates on every prunable layer") {
  Encoder dense = Encoder::build(tiny_config(), 11);
  CHECK_THROWS_AS(extract_layer_sparsities(dense), ShapeError);
}

TEST_CASE("extracted profile matches the gates' hard masks") {
  Encoder model = Encoder::build(tiny_config(), 11);
  model.attach_gates(1e-5, 0.5);
  auto layers = model.prunable();
  // Push each layer's threshold to its own quantile of |w|.
  for (size_t i = 0; i < layers.size(); ++i) {
    std::vector<double> mags;
    for (double v : layers[i]->w.values()) mags.push_back(std::fabs(v));
    std::sort(mags.begin(), mags.end());
    size_t k = (i + 1) * mags.size() / (layers.size() + 1);
    layers[i]->gate.t.values_mut()[0] = 0.5 * (mags[k] + mags[k + 1]);
  }
  std::vector<double> profile = extract_layer_sparsities(model);
  REQUIRE(profile.size() == layers.size());
  for (size_t i = 0; i < layers.size(); ++i) {
    double expect =
        layer_sparsity(hard_mask(layers[i]->w, layers[i]->gate));
    CHECK(profile[i] == expect);
    if (i > 0) CHECK(profile[i] > profile[i - 1]);
  }
}

TEST_CASE("mixed transfer prunes by magnitude and keeps weights untouched") {
  Encoder donor = Encoder::build(tiny_config(), 21);
  size_t n_layers = donor.prunable().size();
  std::vector<double> profile(n_layers);
  for (size_t i = 0; i < n_layers; ++i) profile[i] = 0.1 * (i % 5);

  Encoder out = mixed_sparsity_transfer(donor, profile);
  auto dl = donor.prunable();
  auto ol = out.prunable();
  for (size_t i = 0; i < n_layers; ++i) {
    CHECK(ol[i]->attach == Attach::Mask);
    CHECK(ol[i]->w.values() == dl[i]->w.values());
    CHECK(ol[i]->fixed_mask.values() == ump_mask(dl[i]->w, profile[i]).m.values());
  }
  // Donor stays untouched.
  for (size_t i = 0; i < n_layers; ++i) CHECK(dl[i]->attach == Attach::None);
}

TEST_CASE("mixed transfer refuses compressed donors and bad profiles") {
  Encoder donor = Encoder::build(tiny_config(), 21);
  CHECK_THROWS_AS(mixed_sparsity_transfer(donor, {0.5}), ShapeError);

  Encoder gated = Encoder::build(tiny_config(), 21);
  gated.attach_gates(1e-5, 0.5);
  std::vector<double> profile(gated.prunable().size(), 0.5);
  CHECK_THROWS_AS(mixed_sparsity_transfer(gated, profile), ShapeError);
}

TEST_CASE("transfer then eval path reproduces the profile sparsities") {
  Encoder donor = Encoder::build(tiny_config(), 31);
  size_t n_layers = donor.prunable().size();
  std::vector<double> profile(n_layers, 0.75);
  Encoder out = mixed_sparsity_transfer(donor, profile);
  std::vector<double> achieved = out.layer_sparsities();
  REQUIRE(achieved.size() == n_layers);
  for (size_t i = 0; i < n_layers; ++i) {
    int n = out.prunable()[i]->w.size();
    CHECK(achieved[i] == doctest::Approx(std::floor(0.75 * n) / n));
  }
}
