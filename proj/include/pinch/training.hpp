#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pinch/data.hpp"
#include "pinch/model.hpp"

namespace pinch {

// Bang-bang sparsity controller: while measured sparsity sits below target
// the penalty runs at the preset strength, at or above target it switches
// to 0. one_shot keeps it off permanently after the first hit instead of
// re-arming on regression.
struct SparsityBudget {
  double target = 0.5;
  double eta = 3e-3;      // preset penalty strength, sized for the toy task
  bool one_shot = false;

  // Controller state, owned by update_budget.
  double eta_active = 0.0;
  bool met_once = false;

  void validate() const;
};

void update_budget(SparsityBudget& budget, double overall_sparsity);

struct TrainConfig {
  int epochs = 60;
  int batch_size = 16;
  double lr = 2e-4;
  double warmup = 0.1;  // fraction of total steps ramping 0 -> lr
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  double anneal_start = 0.5;  // shared tau / Gumbel temperature schedule
  double anneal_end = 0.01;
  double t_init = 1e-5;
  bool detach_mask_weights = false;
  bool one_shot_eta = false;
  uint64_t seed = 1;

  void validate() const;
};

// Linear warmup to the peak, then linear decay to exactly 0 at total_steps.
// The warmup knee lands on round(warmup * total_steps) so the peak is hit
// exactly once.
double lr_at(int step, int total_steps, const TrainConfig& cfg);

// Half-period cosine from start at step 0 to end at total_steps.
double anneal_at(int step, int total_steps, double start, double end);

// AdamW with decoupled weight decay; epsilon is added outside the square
// root. Thresholds and architecture parameters are excluded from decay via
// NamedParam::decay.
class AdamW {
 public:
  AdamW(std::vector<NamedParam> params, const TrainConfig& cfg);
  void step(double lr);
  void zero_grad();
  const std::vector<NamedParam>& params() const { return params_; }

 private:
  std::vector<NamedParam> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_, wd_;
  long t_ = 0;
};

enum class Mode { Dense, SelfPinch, Ump, Mixed, Nascp };

const char* mode_name(Mode m);
Mode mode_from_name(const std::string& name);

struct LossParts {
  Tensor total;
  double ctc = 0.0;      // batch-mean CTC term
  double penalty = 0.0;  // retained-count term (0 when not penalized)
};

// Batch-mean CTC loss plus eta_active times the retained-count penalty; the
// penalty term is omitted from the graph entirely when eta_active is 0.
// Reduction order follows the batch order, so results are deterministic.
LossParts batch_loss(const Encoder& model,
                     const std::vector<const Utterance*>& batch,
                     const SparsityBudget& budget, const ForwardCtx& ctx);
Tensor total_loss(const Encoder& model,
                  const std::vector<const Utterance*>& batch,
                  const SparsityBudget& budget, const ForwardCtx& ctx);

struct EpochRow {
  int epoch = 0;
  int steps_done = 0;
  double lr = 0.0;  // schedule values at the epoch's last step
  double tau = 0.0;
  double temperature = 0.0;
  double train_loss = 0.0;  // mean CTC term over the epoch's steps
  double sparsity = 0.0;    // measured after the epoch
  double eta_active = 0.0;  // controller decision for that sparsity
  double dev_ter = 0.0;
  std::vector<double> layer_sparsity;
};

// What the controller saw and chose at one optimization step.
struct StepRecord {
  int step = 0;
  double sparsity_before = 0.0;
  double eta_active = 0.0;
  double ctc = 0.0;
};
using StepObserver = std::function<void(const StepRecord&)>;

struct TrainResult {
  Encoder model;
  std::vector<EpochRow> trace;
};

struct EvalResult {
  double ter = 0.0;  // total errors / total reference tokens
  int total_errors = 0;
  int total_ref = 0;
  std::vector<int> per_utt_errors;
};

// Greedy-decode TER of the discretized model over a split.
EvalResult evaluate(const Encoder& model, const std::vector<Utterance>& split);

// One full compression pass. Every mode starts from the same seed-determined
// initial weights. The mixed mode trains a dense model and a gated probe,
// then transfers the probe's per-layer sparsity profile onto the dense
// weights without fine-tuning; its trace is the probe's.
TrainResult run_one_pass(const EncoderConfig& mcfg, const TrainConfig& tcfg,
                         SparsityBudget budget, Mode mode, const Corpus& corpus,
                         const StepObserver& observer = nullptr);

}  // namespace pinch
