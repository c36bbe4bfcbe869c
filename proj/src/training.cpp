#include "pinch/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pinch/ctc.hpp"
#include "pinch/pruners.hpp"
#include "pinch/rng.hpp"

namespace pinch {

void SparsityBudget::validate() const {
  if (!(target >= 0.0 && target < 1.0)) {
    throw ConfigError("budget: target must lie in [0, 1)");
  }
  if (!(eta >= 0.0)) throw ConfigError("budget: eta must be >= 0");
}

void update_budget(SparsityBudget& budget, double overall_sparsity) {
  bool met = overall_sparsity >= budget.target;
  if (met) budget.met_once = true;
  if (budget.one_shot) {
    budget.eta_active = budget.met_once ? 0.0 : budget.eta;
  } else {
    budget.eta_active = met ? 0.0 : budget.eta;
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (!(warmup >= 0.0 && warmup <= 0.9)) {
    throw ConfigError("train: warmup fraction must lie in [0, 0.9]");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay < 0");
  if (!(anneal_end > 0.0) || !(anneal_start >= anneal_end)) {
    throw ConfigError("train: anneal schedule must satisfy start >= end > 0");
  }
  if (!std::isfinite(t_init)) throw ConfigError("train: t_init must be finite");
}

double lr_at(int step, int total_steps, const TrainConfig& cfg) {
  if (total_steps < 1) throw ShapeError("lr_at: total_steps must be >= 1");
  if (step < 0 || step > total_steps) {
    throw ShapeError("lr_at: step " + std::to_string(step) +
                     " outside [0, " + std::to_string(total_steps) + "]");
  }
  long warm = std::lround(cfg.warmup * total_steps);
  warm = std::min<long>(warm, total_steps - 1);
  // Ratio first: the knee and midpoints then scale lr exactly.
  if (warm > 0 && step < warm) {
    return cfg.lr * (static_cast<double>(step) / static_cast<double>(warm));
  }
  return cfg.lr * (static_cast<double>(total_steps - step) /
                   static_cast<double>(total_steps - warm));
}

double anneal_at(int step, int total_steps, double start, double end) {
  if (total_steps < 1) throw ShapeError("anneal_at: total_steps must be >= 1");
  if (step < 0 || step > total_steps) {
    throw ShapeError("anneal_at: step out of range");
  }
  double phase = std::numbers::pi * static_cast<double>(step) / total_steps;
  return end + 0.5 * (start - end) * (1.0 + std::cos(phase));
}

AdamW::AdamW(std::vector<NamedParam> params, const TrainConfig& cfg)
    : params_(std::move(params)),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.adam_eps),
      wd_(cfg.weight_decay) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void AdamW::step(double lr) {
  if (!std::isfinite(lr)) throw DivergenceError("adamw: non-finite lr");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    auto& p = params_[pi];
    auto& vals = p.tensor.values_mut();
    auto& grad = p.tensor.grad_mut();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (size_t i = 0; i < vals.size(); ++i) {
      double g = grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
      if (p.decay) update += wd_ * vals[i];
      vals[i] -= lr * update;
      if (!std::isfinite(vals[i])) {
        throw DivergenceError("adamw: parameter " + p.name +
                              " became non-finite");
      }
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::Dense: return "dense";
    case Mode::SelfPinch: return "self_pinch";
    case Mode::Ump: return "ump";
    case Mode::Mixed: return "mixed";
    case Mode::Nascp: return "nascp";
  }
  return "dense";
}

Mode mode_from_name(const std::string& name) {
  if (name == "dense") return Mode::Dense;
  if (name == "self_pinch") return Mode::SelfPinch;
  if (name == "ump") return Mode::Ump;
  if (name == "mixed") return Mode::Mixed;
  if (name == "nascp") return Mode::Nascp;
  throw ConfigError("unknown mode '" + name +
                    "' (expected dense, self_pinch, ump, mixed, or nascp)");
}

LossParts batch_loss(const Encoder& model,
                     const std::vector<const Utterance*>& batch,
                     const SparsityBudget& budget, const ForwardCtx& ctx) {
  if (batch.empty()) throw ShapeError("batch_loss: empty batch");
  auto eff = model.prepare(ctx);
  Tensor acc;
  for (const Utterance* u : batch) {
    Tensor lp = model.forward(u->features, eff);
    Tensor l = ctc_loss(lp, u->label);
    acc = acc.defined() ? add(acc, l) : l;
  }
  LossParts parts;
  Tensor ctc = scale(acc, 1.0 / static_cast<double>(batch.size()));
  parts.ctc = ctc.item();
  if (budget.eta_active > 0.0 && eff.penalty.defined()) {
    parts.penalty = eff.penalty.item();
    parts.total = add(ctc, scale(eff.penalty, budget.eta_active));
  } else {
    parts.total = ctc;
  }
  return parts;
}

Tensor total_loss(const Encoder& model,
                  const std::vector<const Utterance*>& batch,
                  const SparsityBudget& budget, const ForwardCtx& ctx) {
  return batch_loss(model, batch, budget, ctx).total;
}

EvalResult evaluate(const Encoder& model, const std::vector<Utterance>& split) {
  if (split.empty()) throw ShapeError("evaluate: empty split");
  ForwardCtx ctx;  // discrete masks, no sampling
  auto eff = model.prepare(ctx);
  EvalResult r;
  r.per_utt_errors.reserve(split.size());
  for (const auto& u : split) {
    Tensor lp = model.forward(u.features, eff);
    EditStats st = token_error_rate(greedy_decode(lp), u.label);
    r.per_utt_errors.push_back(st.errors);
    r.total_errors += st.errors;
    r.total_ref += st.ref_len;
  }
  r.ter = r.total_ref > 0
              ? static_cast<double>(r.total_errors) / r.total_ref
              : 0.0;
  return r;
}

namespace {

TrainResult train_single(const EncoderConfig& mcfg, const TrainConfig& tcfg,
                         SparsityBudget budget, Mode mode, const Corpus& corpus,
                         const StepObserver& observer) {
  Encoder model = Encoder::build(mcfg, tcfg.seed);
  switch (mode) {
    case Mode::Dense:
      break;
    case Mode::SelfPinch:
      model.attach_gates(tcfg.t_init, tcfg.anneal_start);
      break;
    case Mode::Ump:
      model.attach_ump(budget.target);
      break;
    case Mode::Nascp:
      model.attach_nascp();
      break;
    case Mode::Mixed:
      throw ShapeError("train_single: mixed mode is composite");
  }
  budget.one_shot = tcfg.one_shot_eta;

  int nas_layers = 0;
  for (const PrunableLinear* l : model.prunable()) {
    if (l->attach == Attach::Nas) ++nas_layers;
  }

  const int n_train = static_cast<int>(corpus.train.size());
  const int steps_per_epoch = (n_train + tcfg.batch_size - 1) / tcfg.batch_size;
  const int total_steps = tcfg.epochs * steps_per_epoch;

  AdamW opt(model.params(), tcfg);
  Rng shuffle_rng = Rng(tcfg.seed).fork(0x5u);
  Rng gumbel_rng = Rng(tcfg.seed).fork(0x6u);

  std::vector<int> order(n_train);
  for (int i = 0; i < n_train; ++i) order[i] = i;

  TrainResult result;
  int step = 0;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    for (int i = n_train - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);
    }
    double ctc_sum = 0.0;
    double last_lr = 0.0, last_tau = 0.0;
    for (int b0 = 0; b0 < n_train; b0 += tcfg.batch_size) {
      std::vector<const Utterance*> batch;
      for (int i = b0; i < std::min(b0 + tcfg.batch_size, n_train); ++i) {
        batch.push_back(&corpus.train[order[i]]);
      }
      double sparsity_before = model.overall_sparsity();
      update_budget(budget, sparsity_before);

      ForwardCtx ctx;
      ctx.tau = anneal_at(step, total_steps, tcfg.anneal_start, tcfg.anneal_end);
      ctx.temperature = ctx.tau;
      ctx.detach_mask_weights = tcfg.detach_mask_weights;
      for (int l = 0; l < nas_layers; ++l) {
        std::array<double, 7> u;
        for (auto& x : u) x = gumbel_rng.open_uniform();
        ctx.gumbel_u.push_back(u);
      }

      LossParts parts;
      try {
        parts = batch_loss(model, batch, budget, ctx);
        backward(parts.total);
        opt.step(lr_at(step, total_steps, tcfg));
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " at step " +
                              std::to_string(step));
      }
      opt.zero_grad();
      last_lr = lr_at(step, total_steps, tcfg);
      last_tau = ctx.tau;
      ctc_sum += parts.ctc;
      if (observer) {
        observer(StepRecord{step, sparsity_before, budget.eta_active,
                            parts.ctc});
      }
      ++step;
    }

    EpochRow row;
    row.epoch = epoch + 1;  // the row describes a completed epoch
    row.steps_done = step;
    row.lr = last_lr;
    row.tau = last_tau;
    row.temperature = last_tau;
    row.train_loss = ctc_sum / steps_per_epoch;
    row.sparsity = model.overall_sparsity();
    update_budget(budget, row.sparsity);
    row.eta_active = budget.eta_active;
    row.dev_ter = evaluate(model, corpus.dev).ter;
    row.layer_sparsity = model.layer_sparsities();
    result.trace.push_back(std::move(row));
  }
  result.model = std::move(model);
  return result;
}

}  // namespace

TrainResult run_one_pass(const EncoderConfig& mcfg, const TrainConfig& tcfg,
                         SparsityBudget budget, Mode mode, const Corpus& corpus,
                         const StepObserver& observer) {
  mcfg.validate();
  tcfg.validate();
  budget.validate();
  if (mcfg.feat_dim != corpus.spec.feat_dim) {
    throw ConfigError("model feat_dim " + std::to_string(mcfg.feat_dim) +
                      " does not match corpus feat_dim " +
                      std::to_string(corpus.spec.feat_dim));
  }
  if (mcfg.vocab != corpus.spec.vocab) {
    throw ConfigError("model vocab " + std::to_string(mcfg.vocab) +
                      " does not match corpus vocab " +
                      std::to_string(corpus.spec.vocab));
  }
  if (corpus.train.empty() || corpus.dev.empty()) {
    throw ShapeError("run_one_pass: corpus needs train and dev utterances");
  }

  if (mode != Mode::Mixed) {
    return train_single(mcfg, tcfg, budget, mode, corpus, observer);
  }
  TrainResult dense =
      train_single(mcfg, tcfg, budget, Mode::Dense, corpus, nullptr);
  TrainResult probe =
      train_single(mcfg, tcfg, budget, Mode::SelfPinch, corpus, observer);
  std::vector<double> profile = extract_layer_sparsities(probe.model);
  TrainResult out;
  out.model = mixed_sparsity_transfer(dense.model, profile);
  out.trace = std::move(probe.trace);
  return out;
}

}  // namespace pinch
