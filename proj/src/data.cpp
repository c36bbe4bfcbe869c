#include "pinch/data.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pinch/rng.hpp"

namespace pinch {

void CorpusSpec::validate() const {
  if (vocab < 2) throw ConfigError("corpus: vocab must be >= 2");
  if (label_min < 1 || label_max < label_min) {
    throw ConfigError("corpus: label length range invalid");
  }
  if (frames_per_token_min < 2 || frames_per_token_max < frames_per_token_min) {
    // With at least two frames per token any label fits its frame count,
    // repeated tokens included.
    throw ConfigError("corpus: frames per token must satisfy 2 <= min <= max");
  }
  if (feat_dim < 1) throw ConfigError("corpus: feat_dim must be positive");
  if (!(noise_sigma >= 0.0)) throw ConfigError("corpus: noise_sigma < 0");
  if (train_size < 1 || dev_size < 1 || test_size < 1) {
    throw ConfigError("corpus: split sizes must be positive");
  }
}

namespace {

Utterance make_utterance(const CorpusSpec& spec,
                         const std::vector<std::vector<double>>& protos,
                         const std::string& id, Rng rng) {
  Utterance u;
  u.id = id;
  int len = rng.uniform_int(spec.label_min, spec.label_max);
  u.label.reserve(len);
  for (int i = 0; i < len; ++i) {
    u.label.push_back(rng.uniform_int(1, spec.vocab - 1));
  }
  std::vector<int> durations(len);
  int frames = 0;
  for (int i = 0; i < len; ++i) {
    durations[i] =
        rng.uniform_int(spec.frames_per_token_min, spec.frames_per_token_max);
    frames += durations[i];
  }
  // noise_sigma is the expected noise norm relative to the unit-norm
  // prototype, so the per-component stdev divides by sqrt(feat_dim); this
  // keeps the corruption level independent of the feature width.
  const double component_sigma =
      spec.noise_sigma / std::sqrt(static_cast<double>(spec.feat_dim));
  std::vector<double> feat(static_cast<size_t>(frames) * spec.feat_dim);
  int t = 0;
  for (int i = 0; i < len; ++i) {
    const auto& proto = protos[u.label[i] - 1];
    for (int rep = 0; rep < durations[i]; ++rep, ++t) {
      for (int f = 0; f < spec.feat_dim; ++f) {
        feat[static_cast<size_t>(t) * spec.feat_dim + f] =
            proto[f] + component_sigma * rng.normal();
      }
    }
  }
  u.features = Tensor::constant({frames, spec.feat_dim}, std::move(feat));
  return u;
}

std::string utt_id(const char* split, int index) {
  std::ostringstream os;
  os << split << "-";
  std::string n = std::to_string(index);
  for (size_t i = n.size(); i < 6; ++i) os << '0';
  os << n;
  return os.str();
}

}  // namespace

Corpus generate(const CorpusSpec& spec) {
  spec.validate();
  Corpus c;
  c.spec = spec;
  Rng root(spec.seed);

  Rng proto_rng = root.fork(1);
  c.prototypes.resize(spec.vocab - 1);
  for (auto& p : c.prototypes) {
    p.resize(spec.feat_dim);
    double norm = 0.0;
    for (auto& x : p) {
      x = proto_rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) norm = 1.0;
    for (auto& x : p) x /= norm;
  }

  auto fill = [&](std::vector<Utterance>& split, const char* name, int count,
                  uint64_t salt) {
    split.reserve(count);
    for (int i = 0; i < count; ++i) {
      split.push_back(make_utterance(spec, c.prototypes, utt_id(name, i),
                                     root.fork(salt + i)));
    }
  };
  fill(c.train, "train", spec.train_size, 1u << 20);
  fill(c.dev, "dev", spec.dev_size, 2u << 20);
  fill(c.test, "test", spec.test_size, 3u << 20);
  return c;
}

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
    throw IoError("corpus file truncated");
  }
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

void save_split(std::ostream& os, const char* name,
                const std::vector<Utterance>& split) {
  for (const auto& u : split) {
    os << "utt " << name << " " << u.id << " " << u.features.rows();
    for (int tok : u.label) os << " " << tok;
    os << "\n";
  }
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  const CorpusSpec& s = corpus.spec;
  os << "pinch-corpus v1\n";
  os << "spec vocab " << s.vocab << " label_min " << s.label_min
     << " label_max " << s.label_max << " fpt_min " << s.frames_per_token_min
     << " fpt_max " << s.frames_per_token_max << " feat_dim " << s.feat_dim
     << " train " << s.train_size << " dev " << s.dev_size << " test "
     << s.test_size << " seed " << s.seed << "\n";
  os << "noise_sigma " << std::hexfloat << s.noise_sigma << std::defaultfloat
     << "\n";
  save_split(os, "train", corpus.train);
  save_split(os, "dev", corpus.dev);
  save_split(os, "test", corpus.test);
  os << "end\n";
  for (const auto& p : corpus.prototypes) {
    for (double v : p) write_f64(os, v);
  }
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test}) {
    for (const auto& u : *split) {
      for (double v : u.features.values()) write_f64(os, v);
    }
  }
  if (!os) throw IoError("failed writing " + path);
}

Corpus load_corpus(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != "pinch-corpus v1") {
    throw IoError("not a v1 corpus file");
  }
  Corpus c;
  CorpusSpec& s = c.spec;
  struct UttDecl {
    int split;  // 0 train, 1 dev, 2 test
    std::string id;
    int frames;
    std::vector<int> label;
  };
  std::vector<UttDecl> decls;
  bool saw_end = false;
  while (std::getline(is, line)) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "spec") {
      std::string key;
      while (ls >> key) {
        if (key == "seed") {
          if (!(ls >> s.seed)) throw IoError("malformed spec line");
          continue;
        }
        int val;
        if (!(ls >> val)) throw IoError("malformed spec line");
        if (key == "vocab") s.vocab = val;
        else if (key == "label_min") s.label_min = val;
        else if (key == "label_max") s.label_max = val;
        else if (key == "fpt_min") s.frames_per_token_min = val;
        else if (key == "fpt_max") s.frames_per_token_max = val;
        else if (key == "feat_dim") s.feat_dim = val;
        else if (key == "train") s.train_size = val;
        else if (key == "dev") s.dev_size = val;
        else if (key == "test") s.test_size = val;
        else throw IoError("unknown spec key '" + key + "'");
      }
    } else if (kind == "noise_sigma") {
      // Stream extraction cannot parse hexfloat back; strtod can.
      std::string tok;
      if (!(ls >> tok)) throw IoError("malformed noise_sigma line");
      char* end = nullptr;
      s.noise_sigma = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') {
        throw IoError("malformed noise_sigma line");
      }
    } else if (kind == "utt") {
      UttDecl d;
      std::string split;
      if (!(ls >> split >> d.id >> d.frames)) throw IoError("malformed utt line");
      if (split == "train") d.split = 0;
      else if (split == "dev") d.split = 1;
      else if (split == "test") d.split = 2;
      else throw IoError("unknown split '" + split + "'");
      int tok;
      while (ls >> tok) d.label.push_back(tok);
      decls.push_back(std::move(d));
    } else if (!kind.empty()) {
      throw IoError("unknown corpus line '" + kind + "'");
    }
  }
  if (!saw_end) throw IoError("corpus manifest incomplete");
  s.validate();

  c.prototypes.resize(s.vocab - 1);
  for (auto& p : c.prototypes) {
    p.resize(s.feat_dim);
    for (auto& v : p) v = read_f64(is);
  }
  for (const auto& d : decls) {
    Utterance u;
    u.id = d.id;
    u.label = d.label;
    std::vector<double> feat(static_cast<size_t>(d.frames) * s.feat_dim);
    for (auto& v : feat) v = read_f64(is);
    u.features = Tensor::constant({d.frames, s.feat_dim}, std::move(feat));
    auto& split = d.split == 0 ? c.train : d.split == 1 ? c.dev : c.test;
    split.push_back(std::move(u));
  }
  if (static_cast<int>(c.train.size()) != s.train_size ||
      static_cast<int>(c.dev.size()) != s.dev_size ||
      static_cast<int>(c.test.size()) != s.test_size) {
    throw IoError("corpus splits do not match the declared sizes");
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw IoError("trailing data after corpus payload");
  }
  return c;
}

}  // namespace pinch
