#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pinch/tensor.hpp"

namespace pinch {

struct CorpusSpec {
  int vocab = 12;  // classes including the blank; tokens are 1..vocab-1
  int label_min = 3;
  int label_max = 8;
  int frames_per_token_min = 2;  // >= 2 keeps every label CTC-feasible
  int frames_per_token_max = 4;
  int feat_dim = 8;
  double noise_sigma = 0.3;  // noise norm relative to the unit-norm prototype
  int train_size = 2000;
  int dev_size = 200;
  int test_size = 200;
  uint64_t seed = 1;

  void validate() const;
};

struct Utterance {
  std::string id;
  std::vector<int> label;
  Tensor features;  // constant [frames x feat_dim]
};

// Synthetic token-sequence corpus: each token owns one unit-norm prototype
// vector; an utterance repeats each token's prototype for a few frames and
// adds Gaussian noise. Everything is a pure function of the spec.
struct Corpus {
  CorpusSpec spec;
  std::vector<std::vector<double>> prototypes;  // [vocab-1][feat_dim]
  std::vector<Utterance> train, dev, test;
};

Corpus generate(const CorpusSpec& spec);

void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

}  // namespace pinch
