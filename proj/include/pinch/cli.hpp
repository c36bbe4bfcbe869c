#pragma once

#include <string>
#include <vector>

#include "pinch/data.hpp"
#include "pinch/model.hpp"
#include "pinch/training.hpp"

namespace pinch {

// Process exit codes. A significant compare result is a finding, not an
// error, but it still gets its own code so scripts can branch on it.
inline constexpr int kExitOk = 0;
inline constexpr int kExitSignificant = 1;
inline constexpr int kExitUsage = 2;  // bad config or bad invocation
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitIo = 4;

// Flat "key = value" experiment configuration. '#' starts a comment; keys
// are dotted and unknown keys are rejected. The model's vocab and feat_dim
// always come from the corpus section, so the two can never disagree.
struct ExperimentConfig {
  CorpusSpec corpus;
  EncoderConfig model;
  TrainConfig train;
  SparsityBudget budget;
  Mode mode = Mode::SelfPinch;
  std::vector<double> sweep_targets{0.5, 0.75};
  std::vector<Mode> sweep_modes{Mode::SelfPinch, Mode::Ump, Mode::Mixed,
                                Mode::Nascp};
  double compare_alpha = 0.05;

  static ExperimentConfig from_text(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);
  void validate() const;
};

// Resolves an output directory against the PINCH_OUT_ROOT environment
// variable: relative paths are rooted there when it is set.
std::string resolve_out_dir(const std::string& dir);

int cmd_train(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_transfer(const std::string& dense_ckpt, const std::string& gated_ckpt,
                 const std::string& out_ckpt);
int cmd_eval(const ExperimentConfig& cfg, const std::string& ckpt,
             const std::string& split, const std::string& out_dir);
int cmd_compare(const std::string& errors_a, const std::string& errors_b,
                double alpha);
int cmd_sweep(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_report(const std::string& sweep_csv);

}  // namespace pinch
