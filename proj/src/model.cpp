#include "pinch/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

#include "pinch/pruners.hpp"
#include "pinch/rng.hpp"

namespace pinch {

void EncoderConfig::validate() const {
  if (blocks < 1) throw ConfigError("model: blocks must be >= 1");
  if (width < 1 || ffn_width < 1 || feat_dim < 1) {
    throw ConfigError("model: widths must be positive");
  }
  if (heads < 1 || width % heads != 0) {
    throw ConfigError("model: width " + std::to_string(width) +
                      " not divisible by heads " + std::to_string(heads));
  }
  if (vocab < 2) throw ConfigError("model: vocab must include blank + 1 token");
}

const char* attach_name(Attach a) {
  switch (a) {
    case Attach::None: return "none";
    case Attach::Gate: return "gate";
    case Attach::Mask: return "mask";
    case Attach::Nas: return "nas";
  }
  return "none";
}

Attach attach_from_name(const std::string& name) {
  if (name == "none") return Attach::None;
  if (name == "gate") return Attach::Gate;
  if (name == "mask") return Attach::Mask;
  if (name == "nas") return Attach::Nas;
  throw IoError("unknown attachment kind '" + name + "'");
}

Tensor position_encoding(int frames, int width) {
  std::vector<double> pe(static_cast<size_t>(frames) * width);
  for (int t = 0; t < frames; ++t) {
    for (int j = 0; j < width; ++j) {
      int k = j / 2;
      double freq = std::exp(-std::log(10000.0) * (2.0 * k / width));
      double angle = t * freq;
      pe[static_cast<size_t>(t) * width + j] =
          (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::constant({frames, width}, std::move(pe));
}

namespace {

Tensor init_weight(int out, int in, Rng& rng) {
  double s = std::sqrt(2.0 / (out + in));
  std::vector<double> v(static_cast<size_t>(out) * in);
  for (auto& x : v) x = s * rng.normal();
  return Tensor::param({out, in}, std::move(v));
}

PrunableLinear make_linear(std::string name, int out, int in, Rng& rng) {
  PrunableLinear l;
  l.name = std::move(name);
  l.w = init_weight(out, in, rng);
  l.bias = Tensor::param({out}, std::vector<double>(out, 0.0));
  return l;
}

Tensor ones_param(int n) {
  return Tensor::param({n}, std::vector<double>(n, 1.0));
}

Tensor zeros_param(int n) {
  return Tensor::param({n}, std::vector<double>(n, 0.0));
}

Tensor apply_linear(const Tensor& x, const Tensor& w_eff, const Tensor& bias) {
  return add_rowbias(matmul(x, transpose(w_eff)), bias);
}

std::vector<std::vector<int>> sets_from_order(const std::vector<int>& order,
                                              std::span<const double> props) {
  std::vector<std::vector<int>> sets;
  sets.reserve(props.size());
  int g = static_cast<int>(order.size());
  for (double p : props) {
    int k = static_cast<int>(std::floor(p * g));
    sets.emplace_back(order.begin(), order.begin() + k);
  }
  return sets;
}

CandidateMaskSet masks_from_sets(const std::vector<std::vector<int>>& sets,
                                 int rows, int cols, bool channels_are_rows) {
  CandidateMaskSet out;
  for (const auto& pruned : sets) {
    Tensor m = channel_mask(rows, cols, pruned, channels_are_rows);
    double ones = 0.0;
    for (double v : m.values()) ones += v;
    out.masks.push_back(std::move(m));
    out.counts.push_back(ones);
  }
  return out;
}

int argmax_lowest(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

void require_unattached(const PrunableLinear& l) {
  if (l.attach != Attach::None) {
    throw ShapeError("layer " + l.name + " already has a pruning attachment");
  }
}

}  // namespace

Encoder Encoder::build(const EncoderConfig& cfg, uint64_t seed) {
  cfg.validate();
  Encoder e;
  e.cfg_ = cfg;
  Rng rng = Rng(seed).fork(0xe9c0de);
  // Weight draws happen in one fixed traversal; attachments never touch the
  // stream, so initial weights match across compression modes.
  e.in_ = make_linear("in", cfg.width, cfg.feat_dim, rng);
  e.blocks_.resize(cfg.blocks);
  for (int b = 0; b < cfg.blocks; ++b) {
    std::string p = "b" + std::to_string(b) + ".";
    EncoderBlock& blk = e.blocks_[b];
    blk.q = make_linear(p + "q", cfg.width, cfg.width, rng);
    blk.k = make_linear(p + "k", cfg.width, cfg.width, rng);
    blk.v = make_linear(p + "v", cfg.width, cfg.width, rng);
    blk.o = make_linear(p + "o", cfg.width, cfg.width, rng);
    blk.ffn1 = make_linear(p + "ffn1", cfg.ffn_width, cfg.width, rng);
    blk.ffn2 = make_linear(p + "ffn2", cfg.width, cfg.ffn_width, rng);
    blk.ln1_gain = ones_param(cfg.width);
    blk.ln1_bias = zeros_param(cfg.width);
    blk.ln2_gain = ones_param(cfg.width);
    blk.ln2_bias = zeros_param(cfg.width);
  }
  e.final_gain_ = ones_param(cfg.width);
  e.final_bias_ = zeros_param(cfg.width);
  e.out_ = make_linear("out", cfg.vocab, cfg.width, rng);
  return e;
}

std::vector<const PrunableLinear*> Encoder::prunable() const {
  std::vector<const PrunableLinear*> out;
  for (const auto& b : blocks_) {
    for (const PrunableLinear* l : {&b.q, &b.k, &b.v, &b.o, &b.ffn1, &b.ffn2}) {
      out.push_back(l);
    }
  }
  return out;
}

std::vector<PrunableLinear*> Encoder::prunable() {
  std::vector<PrunableLinear*> out;
  for (auto& b : blocks_) {
    for (PrunableLinear* l : {&b.q, &b.k, &b.v, &b.o, &b.ffn1, &b.ffn2}) {
      out.push_back(l);
    }
  }
  return out;
}

void Encoder::attach_gates(double t_init, double tau) {
  if (!std::isfinite(t_init)) {
    throw ShapeError("attach_gates: t_init must be finite");
  }
  for (PrunableLinear* l : prunable()) {
    require_unattached(*l);
    l->attach = Attach::Gate;
    l->gate = SelfPinchGate::init(t_init, tau);
  }
}

void Encoder::attach_fixed_masks(const std::vector<Tensor>& masks) {
  auto layers = prunable();
  if (masks.size() != layers.size()) {
    throw ShapeError("attach_fixed_masks: " + std::to_string(masks.size()) +
                     " masks for " + std::to_string(layers.size()) +
                     " prunable layers");
  }
  for (size_t i = 0; i < layers.size(); ++i) {
    require_unattached(*layers[i]);
    if (masks[i].shape() != layers[i]->w.shape()) {
      throw ShapeError("attach_fixed_masks: mask shape " +
                       shape_str(masks[i].shape()) + " does not match " +
                       layers[i]->name);
    }
    for (double v : masks[i].values()) {
      if (v != 0.0 && v != 1.0) {
        throw ShapeError("attach_fixed_masks: mask entries must be 0 or 1");
      }
    }
  }
  for (size_t i = 0; i < layers.size(); ++i) {
    layers[i]->attach = Attach::Mask;
    layers[i]->fixed_mask = detach(masks[i]);
  }
}

void Encoder::attach_ump(double proportion) {
  for (PrunableLinear* l : prunable()) require_unattached(*l);
  for (PrunableLinear* l : prunable()) {
    l->attach = Attach::Mask;
    l->fixed_mask = ump_mask(l->w, proportion).m;
  }
}

void Encoder::attach_nascp() {
  for (PrunableLinear* l : prunable()) require_unattached(*l);
  for (auto& b : blocks_) {
    b.nas_order_mhsa =
        ascending_order(mhsa_channel_scores(b.q.w, b.k.w, b.v.w, b.o.w));
    b.nas_order_ffn = ascending_order(ffn_channel_scores(b.ffn1.w, b.ffn2.w));
  }
  std::vector<std::pair<std::vector<int>, std::vector<int>>> orders;
  for (const auto& b : blocks_) {
    orders.emplace_back(b.nas_order_mhsa, b.nas_order_ffn);
  }
  attach_nascp_orders(orders);
}

void Encoder::attach_nascp_orders(
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>& orders) {
  if (orders.size() != blocks_.size()) {
    throw ShapeError("attach_nascp_orders: order count mismatch");
  }
  const int ncand = static_cast<int>(kCandidateProportions.size());
  for (size_t bi = 0; bi < blocks_.size(); ++bi) {
    EncoderBlock& b = blocks_[bi];
    b.nas_order_mhsa = orders[bi].first;
    b.nas_order_ffn = orders[bi].second;
    if (static_cast<int>(b.nas_order_mhsa.size()) != cfg_.width ||
        static_cast<int>(b.nas_order_ffn.size()) != cfg_.ffn_width) {
      throw ShapeError("attach_nascp_orders: channel order length mismatch");
    }
    auto mhsa_sets = sets_from_order(b.nas_order_mhsa, kCandidateProportions);
    auto ffn_sets = sets_from_order(b.nas_order_ffn, kCandidateProportions);
    auto attach_one = [&](PrunableLinear& l,
                          const std::vector<std::vector<int>>& sets,
                          bool channels_are_rows) {
      l.attach = Attach::Nas;
      l.alpha = Tensor::param({ncand}, std::vector<double>(ncand, 1.0));
      l.candidates =
          masks_from_sets(sets, l.w.rows(), l.w.cols(), channels_are_rows);
    };
    attach_one(b.q, mhsa_sets, true);
    attach_one(b.k, mhsa_sets, true);
    attach_one(b.v, mhsa_sets, true);
    attach_one(b.o, mhsa_sets, false);
    attach_one(b.ffn1, ffn_sets, true);
    attach_one(b.ffn2, ffn_sets, false);
  }
}

Encoder::NasChoice Encoder::nas_choice(const EncoderBlock& b) const {
  NasChoice c;
  if (b.q.attach != Attach::Nas) return c;
  const int ncand = static_cast<int>(kCandidateProportions.size());
  std::vector<double> mhsa(ncand, 0.0), ffn(ncand, 0.0);
  for (const PrunableLinear* l : {&b.q, &b.k, &b.v, &b.o}) {
    for (int i = 0; i < ncand; ++i) mhsa[i] += l->alpha.values()[i];
  }
  for (const PrunableLinear* l : {&b.ffn1, &b.ffn2}) {
    for (int i = 0; i < ncand; ++i) ffn[i] += l->alpha.values()[i];
  }
  c.mhsa = argmax_lowest(mhsa);
  c.ffn = argmax_lowest(ffn);
  return c;
}

void Encoder::finalize_architecture() {
  bool any = false;
  for (const PrunableLinear* l : prunable()) {
    if (l->attach == Attach::Nas) any = true;
  }
  if (!any) {
    throw ShapeError("finalize_architecture: model has no channel supernet");
  }
  for (auto& b : blocks_) {
    NasChoice c = nas_choice(b);
    auto fix = [](PrunableLinear& l, int choice) {
      if (l.attach != Attach::Nas) return;
      l.fixed_mask = l.candidates.masks[choice];
      l.attach = Attach::Mask;
      l.alpha = Tensor();
      l.candidates = CandidateMaskSet{};
    };
    fix(b.q, c.mhsa);
    fix(b.k, c.mhsa);
    fix(b.v, c.mhsa);
    fix(b.o, c.mhsa);
    fix(b.ffn1, c.ffn);
    fix(b.ffn2, c.ffn);
    b.nas_order_mhsa.clear();
    b.nas_order_ffn.clear();
  }
}

Encoder::Effective Encoder::prepare(const ForwardCtx& ctx) const {
  Effective eff;
  eff.weights.reserve(blocks_.size() * 6 + 2);
  eff.weights.push_back(in_.w);

  int nas_count = 0;
  for (const PrunableLinear* l : prunable()) {
    if (l->attach == Attach::Nas) ++nas_count;
  }
  if (!ctx.gumbel_u.empty() &&
      static_cast<int>(ctx.gumbel_u.size()) != nas_count) {
    throw ShapeError("prepare: " + std::to_string(ctx.gumbel_u.size()) +
                     " Gumbel vectors for " + std::to_string(nas_count) +
                     " supernet layers");
  }

  Tensor penalty;
  auto add_penalty = [&penalty](const Tensor& term) {
    penalty = penalty.defined() ? add(penalty, term) : term;
  };

  size_t nas_idx = 0;
  for (const auto& b : blocks_) {
    NasChoice choice = nas_choice(b);
    auto effective_of = [&](const PrunableLinear& l, int nas_pick) -> Tensor {
      switch (l.attach) {
        case Attach::None:
          return l.w;
        case Attach::Gate: {
          SelfPinchGate g{l.gate.t, ctx.tau};
          Tensor wm = ctx.detach_mask_weights ? detach(l.w) : l.w;
          Tensor m = ste_round(soft_mask(wm, g).m);
          add_penalty(sum(m));
          return mul(l.w, m);
        }
        case Attach::Mask:
          return mul(l.w, l.fixed_mask);
        case Attach::Nas: {
          if (ctx.gumbel_u.empty()) {
            return mul(l.w, l.candidates.masks[nas_pick]);
          }
          const auto& u = ctx.gumbel_u[nas_idx++];
          Tensor lam = gumbel_lambda(l.alpha, ctx.temperature,
                                     std::span<const double>(u));
          add_penalty(nascp_layer_cost(lam, l.candidates));
          return supernet_weight(l.w, l.candidates, lam);
        }
      }
      return l.w;
    };
    eff.weights.push_back(effective_of(b.q, choice.mhsa));
    eff.weights.push_back(effective_of(b.k, choice.mhsa));
    eff.weights.push_back(effective_of(b.v, choice.mhsa));
    eff.weights.push_back(effective_of(b.o, choice.mhsa));
    eff.weights.push_back(effective_of(b.ffn1, choice.ffn));
    eff.weights.push_back(effective_of(b.ffn2, choice.ffn));
  }
  eff.weights.push_back(out_.w);
  eff.penalty = penalty;
  return eff;
}

Tensor Encoder::forward(const Tensor& features, const Effective& eff,
                        ForwardTrace* trace) const {
  if (features.rank() != 2 || features.cols() != cfg_.feat_dim) {
    throw ShapeError("forward: features must be frames x " +
                     std::to_string(cfg_.feat_dim) + ", got " +
                     shape_str(features.shape()));
  }
  if (eff.weights.size() != blocks_.size() * 6 + 2) {
    throw ShapeError("forward: effective weight set does not match model");
  }
  const int frames = features.rows();
  const int d = cfg_.width;
  const int dh = d / cfg_.heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor h = apply_linear(features, eff.weights[0], in_.bias);
  h = add(h, position_encoding(frames, d));

  size_t wi = 1;
  for (const auto& b : blocks_) {
    Tensor a_in = layer_norm(h, b.ln1_gain, b.ln1_bias);
    Tensor q = apply_linear(a_in, eff.weights[wi + 0], b.q.bias);
    Tensor k = apply_linear(a_in, eff.weights[wi + 1], b.k.bias);
    Tensor v = apply_linear(a_in, eff.weights[wi + 2], b.v.bias);
    std::vector<Tensor> heads;
    heads.reserve(cfg_.heads);
    for (int hd = 0; hd < cfg_.heads; ++hd) {
      Tensor qh = slice_cols(q, hd * dh, (hd + 1) * dh);
      Tensor kh = slice_cols(k, hd * dh, (hd + 1) * dh);
      Tensor vh = slice_cols(v, hd * dh, (hd + 1) * dh);
      Tensor probs =
          softmax_rows(scale(matmul(qh, transpose(kh)), att_scale));
      if (trace) trace->attention.push_back(probs);
      heads.push_back(matmul(probs, vh));
    }
    Tensor attn = apply_linear(concat_cols(heads), eff.weights[wi + 3], b.o.bias);
    h = add(h, attn);

    Tensor f_in = layer_norm(h, b.ln2_gain, b.ln2_bias);
    Tensor f = gelu(apply_linear(f_in, eff.weights[wi + 4], b.ffn1.bias));
    Tensor f_out = apply_linear(f, eff.weights[wi + 5], b.ffn2.bias);
    h = add(h, f_out);
    wi += 6;
  }
  h = layer_norm(h, final_gain_, final_bias_);
  Tensor logits = apply_linear(h, eff.weights[wi], out_.bias);
  return log_softmax_rows(logits);
}

Tensor Encoder::forward(const Tensor& features, const ForwardCtx& ctx) const {
  return forward(features, prepare(ctx));
}

std::vector<NamedParam> Encoder::params() const {
  std::vector<NamedParam> out;
  auto push = [&out](const std::string& name, const Tensor& t, bool decay) {
    out.push_back(NamedParam{name, t, decay});
  };
  auto push_linear = [&](const PrunableLinear& l) {
    push(l.name + ".w", l.w, true);
    push(l.name + ".b", l.bias, true);
    if (l.attach == Attach::Gate) push(l.name + ".t", l.gate.t, false);
    if (l.attach == Attach::Nas) push(l.name + ".alpha", l.alpha, false);
  };
  push_linear(in_);
  for (size_t bi = 0; bi < blocks_.size(); ++bi) {
    const EncoderBlock& b = blocks_[bi];
    std::string p = "b" + std::to_string(bi) + ".";
    push_linear(b.q);
    push_linear(b.k);
    push_linear(b.v);
    push_linear(b.o);
    push_linear(b.ffn1);
    push_linear(b.ffn2);
    push(p + "ln1.g", b.ln1_gain, true);
    push(p + "ln1.b", b.ln1_bias, true);
    push(p + "ln2.g", b.ln2_gain, true);
    push(p + "ln2.b", b.ln2_bias, true);
  }
  push("final.g", final_gain_, true);
  push("final.b", final_bias_, true);
  push_linear(out_);
  return out;
}

int Encoder::count_pruning_params() const {
  int n = 0;
  for (const PrunableLinear* l : prunable()) {
    if (l->attach == Attach::Gate) n += l->gate.t.size();
    if (l->attach == Attach::Nas) n += l->alpha.size();
  }
  return n;
}

Tensor Encoder::discrete_mask(const PrunableLinear& l) const {
  switch (l.attach) {
    case Attach::None:
      return Tensor();
    case Attach::Gate:
      return hard_mask(l.w, l.gate).m;
    case Attach::Mask:
      return l.fixed_mask;
    case Attach::Nas:
      break;
  }
  // Supernet layers resolve through their block's module argmax; handled by
  // the per-block walks below.
  throw ShapeError("discrete_mask: supernet layer needs its module choice");
}

std::vector<double> Encoder::layer_sparsities() const {
  std::vector<double> out;
  auto zero_fraction = [](const Tensor& w, const Tensor& mask) {
    int zeros = 0;
    for (int i = 0; i < w.size(); ++i) {
      double v = w.values()[i] * (mask.defined() ? mask.values()[i] : 1.0);
      if (v == 0.0) ++zeros;
    }
    return static_cast<double>(zeros) / w.size();
  };
  for (const auto& b : blocks_) {
    NasChoice c = nas_choice(b);
    auto one = [&](const PrunableLinear& l, int pick) {
      Tensor mask = l.attach == Attach::Nas ? l.candidates.masks[pick]
                                            : discrete_mask(l);
      out.push_back(zero_fraction(l.w, mask));
    };
    one(b.q, c.mhsa);
    one(b.k, c.mhsa);
    one(b.v, c.mhsa);
    one(b.o, c.mhsa);
    one(b.ffn1, c.ffn);
    one(b.ffn2, c.ffn);
  }
  return out;
}

double Encoder::overall_sparsity() const {
  auto layers = prunable();
  auto per_layer = layer_sparsities();
  double zeros = 0.0;
  double total = 0.0;
  for (size_t i = 0; i < layers.size(); ++i) {
    zeros += per_layer[i] * layers[i]->w.size();
    total += layers[i]->w.size();
  }
  return zeros / total;
}

// ---------------------------------------------------------------------------
// Checkpoint format: a short text manifest (version, config, attachments,
// channel orders, array roster) terminated by "end", then the raw values of
// every roster array as little-endian IEEE doubles in roster order.
// ---------------------------------------------------------------------------

namespace {

void write_f64(std::ostream& os, double d) {
  uint64_t bits = std::bit_cast<uint64_t>(d);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw IoError("checkpoint truncated inside array data");
  }
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

struct RosterEntry {
  std::string name;
  Tensor tensor;
};

}  // namespace

void Encoder::save(std::ostream& os) const {
  os << "pinch-checkpoint v1\n";
  os << "config blocks " << cfg_.blocks << " width " << cfg_.width
     << " ffn_width " << cfg_.ffn_width << " heads " << cfg_.heads << " vocab "
     << cfg_.vocab << " feat_dim " << cfg_.feat_dim << "\n";
  for (const PrunableLinear* l : prunable()) {
    os << "attach " << l->name << " " << attach_name(l->attach) << "\n";
  }
  for (size_t bi = 0; bi < blocks_.size(); ++bi) {
    const EncoderBlock& b = blocks_[bi];
    if (b.nas_order_mhsa.empty()) continue;
    os << "nasorder b" << bi << " mhsa";
    for (int c : b.nas_order_mhsa) os << " " << c;
    os << "\n";
    os << "nasorder b" << bi << " ffn";
    for (int c : b.nas_order_ffn) os << " " << c;
    os << "\n";
  }

  std::vector<RosterEntry> roster;
  for (const auto& p : params()) {
    roster.push_back({p.name, p.tensor});
  }
  for (const PrunableLinear* l : prunable()) {
    if (l->attach == Attach::Mask) {
      roster.push_back({l->name + ".mask", l->fixed_mask});
    }
  }
  for (const auto& e : roster) {
    os << "array " << e.name;
    os << " " << e.tensor.rank();
    for (int d : e.tensor.shape()) os << " " << d;
    os << "\n";
  }
  os << "end\n";
  for (const auto& e : roster) {
    for (double v : e.tensor.values()) write_f64(os, v);
  }
  if (!os) throw IoError("checkpoint write failed");
}

void Encoder::save_file(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  save(f);
  f.flush();
  if (!f) throw IoError("failed writing " + path);
}

Encoder Encoder::load(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "pinch-checkpoint v1") {
    throw IoError("not a v1 checkpoint (bad magic line)");
  }

  EncoderConfig cfg;
  std::vector<std::pair<std::string, Attach>> attaches;
  std::map<std::string, std::pair<std::vector<int>, std::vector<int>>> orders;
  struct ArrayDecl {
    std::string name;
    std::vector<int> shape;
  };
  std::vector<ArrayDecl> decls;
  bool saw_config = false;
  bool saw_end = false;

  while (std::getline(is, line)) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "config") {
      std::string key;
      while (ls >> key) {
        int val;
        if (!(ls >> val)) throw IoError("malformed config line");
        if (key == "blocks") cfg.blocks = val;
        else if (key == "width") cfg.width = val;
        else if (key == "ffn_width") cfg.ffn_width = val;
        else if (key == "heads") cfg.heads = val;
        else if (key == "vocab") cfg.vocab = val;
        else if (key == "feat_dim") cfg.feat_dim = val;
        else throw IoError("unknown config key '" + key + "'");
      }
      saw_config = true;
    } else if (kind == "attach") {
      std::string name, a;
      if (!(ls >> name >> a)) throw IoError("malformed attach line");
      attaches.emplace_back(name, attach_from_name(a));
    } else if (kind == "nasorder") {
      std::string blk, module;
      if (!(ls >> blk >> module)) throw IoError("malformed nasorder line");
      std::vector<int> order;
      int c;
      while (ls >> c) order.push_back(c);
      if (module == "mhsa") orders[blk].first = std::move(order);
      else if (module == "ffn") orders[blk].second = std::move(order);
      else throw IoError("unknown nasorder module '" + module + "'");
    } else if (kind == "array") {
      ArrayDecl d;
      int rank;
      if (!(ls >> d.name >> rank) || rank < 1 || rank > 4) {
        throw IoError("malformed array line");
      }
      d.shape.resize(rank);
      for (int i = 0; i < rank; ++i) {
        if (!(ls >> d.shape[i])) throw IoError("malformed array line");
      }
      decls.push_back(std::move(d));
    } else if (!kind.empty()) {
      throw IoError("unknown manifest line '" + kind + "'");
    }
  }
  if (!saw_config || !saw_end) {
    throw IoError("checkpoint manifest incomplete");
  }

  Encoder e = build(cfg, 0);

  auto layers = e.prunable();
  if (attaches.size() != layers.size()) {
    throw IoError("attachment list does not cover the prunable layers");
  }
  bool any_nas = false;
  for (const auto& a : attaches) {
    if (a.second == Attach::Nas) any_nas = true;
  }
  for (size_t i = 0; i < layers.size(); ++i) {
    if (attaches[i].first != layers[i]->name) {
      throw IoError("attachment order mismatch at " + attaches[i].first);
    }
    if (any_nas && attaches[i].second != Attach::Nas) {
      throw IoError("supernet checkpoints must attach every prunable layer");
    }
    switch (attaches[i].second) {
      case Attach::None:
      case Attach::Nas:
        break;
      case Attach::Gate:
        layers[i]->attach = Attach::Gate;
        layers[i]->gate = SelfPinchGate::init(0.0);
        break;
      case Attach::Mask:
        layers[i]->attach = Attach::Mask;
        layers[i]->fixed_mask = Tensor::zeros(layers[i]->w.shape());
        break;
    }
  }
  if (any_nas) {
    std::vector<std::pair<std::vector<int>, std::vector<int>>> ov;
    for (int bi = 0; bi < cfg.blocks; ++bi) {
      auto it = orders.find("b" + std::to_string(bi));
      if (it == orders.end()) {
        throw IoError("missing channel orders for block " + std::to_string(bi));
      }
      ov.push_back(it->second);
    }
    e.attach_nascp_orders(ov);
  }

  std::map<std::string, Tensor> arrays;
  for (auto& p : e.params()) arrays.emplace(p.name, p.tensor);
  for (PrunableLinear* l : e.prunable()) {
    if (l->attach == Attach::Mask) {
      arrays.emplace(l->name + ".mask", l->fixed_mask);
    }
  }
  if (decls.size() != arrays.size()) {
    throw IoError("array roster does not match the model (" +
                  std::to_string(decls.size()) + " vs " +
                  std::to_string(arrays.size()) + " arrays)");
  }
  for (const auto& d : decls) {
    auto it = arrays.find(d.name);
    if (it == arrays.end()) throw IoError("unexpected array '" + d.name + "'");
    if (it->second.shape() != d.shape) {
      throw IoError("array '" + d.name + "' has shape " + shape_str(d.shape) +
                    " in the file but " + shape_str(it->second.shape()) +
                    " in the model");
    }
    auto& vals = it->second.values_mut();
    for (auto& v : vals) v = read_f64(is);
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw IoError("trailing data after checkpoint payload");
  }
  return e;
}

Encoder Encoder::load_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  return load(f);
}

Encoder Encoder::clone() const {
  std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
  save(buf);
  buf.seekg(0);
  return load(buf);
}

}  // namespace pinch
