#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "pinch/ctc.hpp"
#include "pinch/pruners.hpp"
#include "pinch/training.hpp"

using namespace pinch;

namespace {

CorpusSpec micro_corpus_spec() {
  CorpusSpec s;
  s.vocab = 6;
  s.label_min = 2;
  s.label_max = 3;
  s.feat_dim = 4;
  s.train_size = 8;
  s.dev_size = 3;
  s.test_size = 3;
  s.seed = 2;
  return s;
}

EncoderConfig micro_model_config() {
  EncoderConfig cfg;
  cfg.blocks = 1;
  cfg.width = 8;
  cfg.ffn_width = 16;
  cfg.heads = 2;
  cfg.vocab = 6;
  cfg.feat_dim = 4;
  return cfg;
}

TrainConfig micro_train_config() {
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 4;
  t.lr = 1e-3;
  t.seed = 3;
  return t;
}

}  // namespace

TEST_CASE("learning rate warms up linearly and decays to zero") {
  TrainConfig cfg;
  cfg.lr = 2e-4;
  cfg.warmup = 0.1;
  const int total = 100;
  CHECK(lr_at(0, total, cfg) == 0.0);
  CHECK(lr_at(5, total, cfg) == cfg.lr * 0.5);
  CHECK(lr_at(10, total, cfg) == cfg.lr);  // the knee hits the peak exactly
  CHECK(lr_at(55, total, cfg) == cfg.lr * 0.5);
  CHECK(lr_at(100, total, cfg) == 0.0);
  for (int s = 1; s <= total; ++s) {
    bool positive = lr_at(s, total, cfg) > 0.0;
    CHECK(positive == (s < total));
  }
}

TEST_CASE("zero warmup starts at the peak") {
  TrainConfig cfg;
  cfg.warmup = 0.0;
  CHECK(lr_at(0, 10, cfg) == cfg.lr);
  CHECK(lr_at(5, 10, cfg) == cfg.lr * 0.5);
}

TEST_CASE("a one-step schedule is usable") {
  TrainConfig cfg;
  cfg.warmup = 0.5;  // knee would land on the only step; clamped back
  CHECK(lr_at(0, 1, cfg) == cfg.lr);
  CHECK(lr_at(1, 1, cfg) == 0.0);
}

TEST_CASE("schedule arguments are validated") {
  TrainConfig cfg;
  CHECK_THROWS_AS(lr_at(-1, 10, cfg), ShapeError);
  CHECK_THROWS_AS(lr_at(11, 10, cfg), ShapeError);
  CHECK_THROWS_AS(lr_at(0, 0, cfg), ShapeError);
  CHECK_THROWS_AS(anneal_at(-1, 10, 0.5, 0.01), ShapeError);
  CHECK_THROWS_AS(anneal_at(3, 0, 0.5, 0.01), ShapeError);
}

TEST_CASE("temperature anneal is a half-period cosine") {
  CHECK(anneal_at(0, 100, 0.5, 0.01) == 0.5);
  CHECK(anneal_at(50, 100, 0.5, 0.01) == doctest::Approx(0.255).epsilon(1e-12));
  CHECK(anneal_at(100, 100, 0.5, 0.01) ==
        doctest::Approx(0.01).epsilon(1e-12));
  for (int s = 1; s <= 100; ++s) {
    CHECK(anneal_at(s, 100, 0.5, 0.01) < anneal_at(s - 1, 100, 0.5, 0.01));
  }
}

TEST_CASE("train config validation") {
  TrainConfig t;
  t.warmup = 0.95;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.anneal_end = 0.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.anneal_start = 0.001;  // below the end value
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.epochs = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  CHECK_NOTHROW(TrainConfig{}.validate());
}

TEST_CASE("first adamw step matches the hand-computed update") {
  Tensor theta = Tensor::param({1}, {1.0});
  TrainConfig cfg;
  AdamW opt({NamedParam{"theta", theta, true}}, cfg);
  theta.grad_mut()[0] = 0.5;
  opt.step(0.1);
  double expect = 1.0 - 0.1 * (0.5 / (0.5 + cfg.adam_eps));
  CHECK(theta.values()[0] == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("decay exemption leaves thresholds out of weight decay") {
  Tensor decayed = Tensor::param({1}, {2.0});
  Tensor exempt = Tensor::param({1}, {2.0});
  TrainConfig cfg;
  cfg.weight_decay = 0.1;
  AdamW opt({NamedParam{"w", decayed, true}, NamedParam{"t", exempt, false}},
            cfg);
  decayed.grad_mut()[0] = 0.5;
  exempt.grad_mut()[0] = 0.5;
  opt.step(0.1);
  CHECK(exempt.values()[0] > decayed.values()[0]);
  double gap = exempt.values()[0] - decayed.values()[0];
  CHECK(gap == doctest::Approx(0.1 * 0.1 * 2.0).epsilon(1e-12));
}

TEST_CASE("optimizer blowups surface as divergence errors") {
  Tensor theta = Tensor::param({1}, {1.0});
  AdamW opt({NamedParam{"theta", theta, true}}, TrainConfig{});
  theta.grad_mut()[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(opt.step(0.1), DivergenceError);
}

TEST_CASE("bang-bang controller re-arms unless one-shot") {
  SparsityBudget b;
  b.target = 0.5;
  b.eta = 0.01;
  update_budget(b, 0.3);
  CHECK(b.eta_active == 0.01);
  CHECK_FALSE(b.met_once);
  update_budget(b, 0.5);
  CHECK(b.eta_active == 0.0);
  CHECK(b.met_once);
  update_budget(b, 0.4);  // regression re-arms the penalty
  CHECK(b.eta_active == 0.01);

  SparsityBudget once;
  once.target = 0.5;
  once.eta = 0.01;
  once.one_shot = true;
  update_budget(once, 0.6);
  CHECK(once.eta_active == 0.0);
  update_budget(once, 0.2);  // stays off after the first hit
  CHECK(once.eta_active == 0.0);
}

TEST_CASE("budget validation") {
  SparsityBudget b;
  b.target = 1.0;
  CHECK_THROWS_AS(b.validate(), ConfigError);
  b = SparsityBudget{};
  b.target = -0.1;
  CHECK_THROWS_AS(b.validate(), ConfigError);
  b = SparsityBudget{};
  b.eta = -1e-9;
  CHECK_THROWS_AS(b.validate(), ConfigError);
  CHECK_NOTHROW(SparsityBudget{}.validate());
}

TEST_CASE("mode names round-trip") {
  for (Mode m : {Mode::Dense, Mode::SelfPinch, Mode::Ump, Mode::Mixed,
                 Mode::Nascp}) {
    CHECK(mode_from_name(mode_name(m)) == m);
  }
  CHECK_THROWS_AS(mode_from_name("magnitude"), ConfigError);
}

TEST_CASE("batch loss is the mean of per-utterance ctc losses") {
  Corpus corpus = generate(micro_corpus_spec());
  Encoder model = Encoder::build(micro_model_config(), 7);
  ForwardCtx ctx;
  std::vector<const Utterance*> batch{&corpus.train[0], &corpus.train[1]};
  LossParts parts = batch_loss(model, batch, SparsityBudget{}, ctx);
  auto eff = model.prepare(ctx);
  double manual = 0.0;
  for (const Utterance* u : batch) {
    manual += ctc_loss(model.forward(u->features, eff), u->label).item();
  }
  manual /= 2.0;
  CHECK(parts.ctc == doctest::Approx(manual).epsilon(1e-12));
  CHECK(parts.penalty == 0.0);
  CHECK(parts.total.item() == parts.ctc);
}

TEST_CASE("penalty joins the loss only while the controller is armed") {
  Corpus corpus = generate(micro_corpus_spec());
  Encoder model = Encoder::build(micro_model_config(), 7);
  model.attach_gates(1e-5, 0.5);
  std::vector<const Utterance*> batch{&corpus.train[0]};

  SparsityBudget armed;
  armed.eta = 0.01;
  update_budget(armed, 0.0);  // below target, so the penalty is on
  ForwardCtx ctx;
  ctx.tau = 0.5;
  LossParts on = batch_loss(model, batch, armed, ctx);
  CHECK(on.penalty > 0.0);
  CHECK(on.total.item() ==
        doctest::Approx(on.ctc + 0.01 * on.penalty).epsilon(1e-12));

  SparsityBudget idle;
  idle.eta = 0.01;
  update_budget(idle, 0.9);  // target met, penalty off
  LossParts off = batch_loss(model, batch, idle, ctx);
  CHECK(off.penalty == 0.0);
  CHECK(off.total.item() == off.ctc);
}

TEST_CASE("evaluate pools errors over the split") {
  Corpus corpus = generate(micro_corpus_spec());
  Encoder model = Encoder::build(micro_model_config(), 7);
  EvalResult r = evaluate(model, corpus.dev);
  REQUIRE(r.per_utt_errors.size() == corpus.dev.size());
  int errors = 0, ref = 0;
  for (size_t i = 0; i < corpus.dev.size(); ++i) {
    errors += r.per_utt_errors[i];
    ref += static_cast<int>(corpus.dev[i].label.size());
  }
  CHECK(r.total_errors == errors);
  CHECK(r.total_ref == ref);
  CHECK(r.ter == doctest::Approx(static_cast<double>(errors) / ref));
}

TEST_CASE("training is deterministic end to end") {
  Corpus corpus = generate(micro_corpus_spec());
  auto run = [&] {
    return run_one_pass(micro_model_config(), micro_train_config(),
                        SparsityBudget{}, Mode::SelfPinch, corpus);
  };
  TrainResult a = run();
  TrainResult b = run();
  REQUIRE(a.trace.size() == b.trace.size());
  for (size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].train_loss == b.trace[i].train_loss);
    CHECK(a.trace[i].dev_ter == b.trace[i].dev_ter);
    CHECK(a.trace[i].sparsity == b.trace[i].sparsity);
  }
  auto pa = a.model.params();
  auto pb = b.model.params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].tensor.values() == pb[i].tensor.values());
  }
}

TEST_CASE("each mode produces a structurally sound result") {
  Corpus corpus = generate(micro_corpus_spec());
  TrainConfig tcfg = micro_train_config();
  tcfg.epochs = 1;
  SparsityBudget budget;
  budget.target = 0.5;

  SUBCASE("dense stays dense") {
    TrainResult r =
        run_one_pass(micro_model_config(), tcfg, budget, Mode::Dense, corpus);
    CHECK(r.model.overall_sparsity() == 0.0);
    CHECK(r.model.count_pruning_params() == 0);
    REQUIRE(r.trace.size() == 1);
    CHECK(r.trace[0].steps_done == 2);  // 8 utterances / batch 4
  }
  SUBCASE("ump starts at its target and keeps fixed masks") {
    TrainResult r =
        run_one_pass(micro_model_config(), tcfg, budget, Mode::Ump, corpus);
    CHECK(r.model.overall_sparsity() ==
          doctest::Approx(0.5).epsilon(0.01));
    for (const PrunableLinear* l : r.model.prunable()) {
      CHECK(l->attach == Attach::Mask);
    }
  }
  SUBCASE("gated training leaves gates attached") {
    TrainResult r = run_one_pass(micro_model_config(), tcfg, budget,
                                 Mode::SelfPinch, corpus);
    for (const PrunableLinear* l : r.model.prunable()) {
      CHECK(l->attach == Attach::Gate);
    }
    REQUIRE_FALSE(r.trace.empty());
    CHECK(r.trace.back().layer_sparsity.size() == 6);
  }
  SUBCASE("supernet training keeps the search space") {
    TrainResult r =
        run_one_pass(micro_model_config(), tcfg, budget, Mode::Nascp, corpus);
    for (const PrunableLinear* l : r.model.prunable()) {
      CHECK(l->attach == Attach::Nas);
      CHECK(l->alpha.size() == 7);
    }
  }
  SUBCASE("mixed transfers the probe profile onto the dense weights") {
    TrainResult r =
        run_one_pass(micro_model_config(), tcfg, budget, Mode::Mixed, corpus);
    for (const PrunableLinear* l : r.model.prunable()) {
      CHECK(l->attach == Attach::Mask);
    }
    TrainResult probe = run_one_pass(micro_model_config(), tcfg, budget,
                                     Mode::SelfPinch, corpus);
    std::vector<double> profile = extract_layer_sparsities(probe.model);
    std::vector<double> got = r.model.layer_sparsities();
    REQUIRE(got.size() == profile.size());
    for (size_t i = 0; i < got.size(); ++i) {
      int n = r.model.prunable()[i]->w.size();
      CHECK(got[i] == doctest::Approx(std::floor(profile[i] * n) / n));
    }
    // The trace is the probe's, not the dense run's.
    REQUIRE(r.trace.size() == probe.trace.size());
    CHECK(r.trace[0].sparsity == probe.trace[0].sparsity);
  }
}

TEST_CASE("corpus and model vocabularies must agree") {
  Corpus corpus = generate(micro_corpus_spec());
  EncoderConfig bad = micro_model_config();
  bad.vocab = 9;
  CHECK_THROWS_AS(run_one_pass(bad, micro_train_config(), SparsityBudget{},
                               Mode::Dense, corpus),
                  ConfigError);
  bad = micro_model_config();
  bad.feat_dim = 5;
  CHECK_THROWS_AS(run_one_pass(bad, micro_train_config(), SparsityBudget{},
                               Mode::Dense, corpus),
                  ConfigError);
}

TEST_CASE("step observer sees a consistent controller decision") {
  Corpus corpus = generate(micro_corpus_spec());
  TrainConfig tcfg = micro_train_config();
  SparsityBudget budget;
  budget.target = 0.0;  // met from the very first measurement
  std::vector<StepRecord> records;
  run_one_pass(micro_model_config(), tcfg, budget, Mode::SelfPinch, corpus,
               [&](const StepRecord& r) { records.push_back(r); });
  REQUIRE_FALSE(records.empty());
  for (const StepRecord& r : records) {
    CHECK(r.eta_active == 0.0);  // sparsity >= 0 target always holds
    CHECK(r.sparsity_before >= 0.0);
  }
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].step == static_cast<int>(i));
  }
}
