#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "pinch/cli.hpp"

namespace {

pinch::ExperimentConfig load_config(const std::string& path, bool have_seed,
                                    uint64_t seed) {
  pinch::ExperimentConfig cfg = pinch::ExperimentConfig::from_file(path);
  if (have_seed) {
    cfg.train.seed = seed;
    cfg.validate();
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"layer-gated pruning experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  uint64_t seed = 0;
  bool have_seed = false;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* c = cmd->add_option("--config", config_path, "experiment config file");
    if (needs_config) c->required();
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "override train.seed")
        ->each([&](const std::string&) { have_seed = true; });
  };

  auto* train = app.add_subcommand("train", "train one model in the configured mode");
  add_common(train, true);

  auto* transfer = app.add_subcommand(
      "transfer", "apply a gated model's sparsity profile to a dense model");
  std::string dense_ckpt, gated_ckpt, out_ckpt;
  transfer->add_option("dense", dense_ckpt, "dense checkpoint")->required();
  transfer->add_option("gated", gated_ckpt, "gate-trained checkpoint")->required();
  transfer->add_option("output", out_ckpt, "output checkpoint")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  add_common(eval, true);
  std::string ckpt, split = "test";
  eval->add_option("--ckpt", ckpt, "checkpoint to evaluate")->required();
  eval->add_option("--split", split, "train, dev, or test");

  auto* compare = app.add_subcommand(
      "compare", "matched-pairs significance test on two error-count files");
  std::string errs_a, errs_b;
  double alpha = 0.05;
  compare->add_option("a", errs_a, "per-utterance error counts, system A")
      ->required();
  compare->add_option("b", errs_b, "per-utterance error counts, system B")
      ->required();
  compare->add_option("--alpha", alpha, "significance level");

  auto* sweep = app.add_subcommand(
      "sweep", "dense baseline plus every configured mode and target");
  add_common(sweep, true);

  auto* report = app.add_subcommand("report", "pretty-print a sweep.csv");
  std::string sweep_csv;
  report->add_option("csv", sweep_csv, "sweep.csv path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      return pinch::cmd_train(load_config(config_path, have_seed, seed), out_dir);
    }
    if (transfer->parsed()) {
      return pinch::cmd_transfer(dense_ckpt, gated_ckpt, out_ckpt);
    }
    if (eval->parsed()) {
      return pinch::cmd_eval(load_config(config_path, have_seed, seed), ckpt,
                             split, out_dir);
    }
    if (compare->parsed()) {
      return pinch::cmd_compare(errs_a, errs_b, alpha);
    }
    if (sweep->parsed()) {
      return pinch::cmd_sweep(load_config(config_path, have_seed, seed), out_dir);
    }
    if (report->parsed()) {
      return pinch::cmd_report(sweep_csv);
    }
  } catch (const pinch::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return pinch::kExitUsage;
  } catch (const pinch::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return pinch::kExitDivergence;
  } catch (const pinch::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return pinch::kExitIo;
  } catch (const pinch::ShapeError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return pinch::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pinch::kExitUsage;
  }
  return pinch::kExitUsage;
}
