#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "pinch/gates.hpp"
#include "pinch/nascp.hpp"
#include "pinch/tensor.hpp"

namespace pinch {

struct EncoderConfig {
  int blocks = 2;
  int width = 32;      // model dimension, divisible by heads
  int ffn_width = 64;  // feed-forward hidden dimension
  int heads = 4;
  int vocab = 12;    // output classes including the blank at index 0
  int feat_dim = 8;  // input feature dimension

  void validate() const;
};

// What, if anything, prunes a linear layer.
enum class Attach { None, Gate, Mask, Nas };

const char* attach_name(Attach a);
Attach attach_from_name(const std::string& name);

// A weight matrix the compression methods may sparsify. The input and output
// projections of the encoder are deliberately plain (never pruned), matching
// how the compared methods treat embeddings and classifier heads.
struct PrunableLinear {
  std::string name;
  Tensor w;     // [out x in] parameter
  Tensor bias;  // [out] parameter

  Attach attach = Attach::None;
  SelfPinchGate gate;           // Attach::Gate
  Tensor fixed_mask;            // Attach::Mask, constant 0/1
  Tensor alpha;                 // Attach::Nas, positive architecture params
  CandidateMaskSet candidates;  // Attach::Nas, frozen at attach time
};

struct EncoderBlock {
  PrunableLinear q, k, v, o, ffn1, ffn2;
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  // Ascending channel orders frozen when the architecture search attaches;
  // candidate masks are prefix cuts of these.
  std::vector<int> nas_order_mhsa, nas_order_ffn;
};

struct NamedParam {
  std::string name;
  Tensor tensor;
  bool decay = true;  // thresholds and architecture params opt out
};

// Per-step forward context. Schedules live outside the model; the trainer
// passes the current values in.
struct ForwardCtx {
  double tau = 0.01;          // gate temperature
  double temperature = 0.01;  // architecture Gumbel temperature
  bool detach_mask_weights = false;
  // One uniform vector per supernet layer in canonical order. Empty means
  // discrete evaluation: each module uses its argmax candidate.
  std::vector<std::array<double, 7>> gumbel_u;
};

struct ForwardTrace {
  std::vector<Tensor> attention;  // one row-stochastic matrix per block/head
};

// Small pre-norm transformer encoder with a log-softmax classification head
// per frame. Only the per-block projection and feed-forward weights are
// prunable; layer norms, biases, and the input/output projections are not.
class Encoder {
 public:
  Encoder() = default;

  // Initialization depends only on (cfg, seed), never on later attachments,
  // so every compression mode starts from identical weights.
  static Encoder build(const EncoderConfig& cfg, uint64_t seed);

  const EncoderConfig& config() const { return cfg_; }

  void attach_gates(double t_init, double tau);
  void attach_fixed_masks(const std::vector<Tensor>& masks);
  void attach_ump(double proportion);  // magnitude masks from current weights
  void attach_nascp();                 // channel supernet from current weights
  // Collapses a trained supernet: each module keeps its argmax candidate
  // (summing architecture params over the module's layers so the channel
  // choice stays coherent across them) and becomes a fixed mask.
  void finalize_architecture();

  struct Effective {
    std::vector<Tensor> weights;  // per linear, canonical order
    Tensor penalty;               // retained-count term; defined iff penalized
  };

  // Builds the effective weights once per step; forwards over a batch reuse
  // them so masks and penalties are shared subgraphs.
  Effective prepare(const ForwardCtx& ctx) const;
  Tensor forward(const Tensor& features, const Effective& eff,
                 ForwardTrace* trace = nullptr) const;
  Tensor forward(const Tensor& features, const ForwardCtx& ctx) const;

  std::vector<const PrunableLinear*> prunable() const;
  std::vector<PrunableLinear*> prunable();
  // Trainable parameters in a stable traversal order. Tensors are handles,
  // so updating them through the returned list updates the model.
  std::vector<NamedParam> params() const;

  // Number of parameters the pruning machinery itself adds.
  int count_pruning_params() const;
  // Zero fraction over prunable-layer entries under the current discrete
  // masks (gates harden, supernets take their module argmax).
  double overall_sparsity() const;
  std::vector<double> layer_sparsities() const;

  Encoder clone() const;

  void save(std::ostream& os) const;
  void save_file(const std::string& path) const;
  static Encoder load(std::istream& is);
  static Encoder load_file(const std::string& path);

  EncoderBlock& block(int i) { return blocks_[i]; }
  const EncoderBlock& block(int i) const { return blocks_[i]; }
  PrunableLinear& in_proj() { return in_; }
  PrunableLinear& out_proj() { return out_; }

 private:
  struct NasChoice {
    int mhsa = 0;
    int ffn = 0;
  };
  NasChoice nas_choice(const EncoderBlock& b) const;
  Tensor discrete_mask(const PrunableLinear& l) const;
  void attach_nascp_orders(
      const std::vector<std::pair<std::vector<int>, std::vector<int>>>& orders);

  EncoderConfig cfg_;
  PrunableLinear in_, out_;
  Tensor final_gain_, final_bias_;
  std::vector<EncoderBlock> blocks_;

  friend std::vector<double> extract_layer_sparsities(const Encoder&);
};

// Sinusoidal position encoding, [frames x width] constant.
Tensor position_encoding(int frames, int width);

}  // namespace pinch
