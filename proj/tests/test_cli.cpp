#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "pinch/cli.hpp"
#include "pinch/pruners.hpp"
#include "testutil.hpp"

using namespace pinch;

namespace {

std::string micro_config_text() {
  return "corpus.vocab = 6\n"
         "corpus.label_min = 2\n"
         "corpus.label_max = 3\n"
         "corpus.frames_per_token_min = 2\n"
         "corpus.frames_per_token_max = 3\n"
         "corpus.feat_dim = 4\n"
         "corpus.noise_sigma = 0.2\n"
         "corpus.train_size = 8\n"
         "corpus.dev_size = 3\n"
         "corpus.test_size = 3\n"
         "corpus.seed = 11\n"
         "model.blocks = 1\n"
         "model.width = 8\n"
         "model.ffn_width = 16\n"
         "model.heads = 2\n"
         "train.epochs = 2\n"
         "train.batch_size = 4\n"
         "train.lr = 0.001\n"
         "train.seed = 7\n"
         "budget.target = 0.5\n";
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  REQUIRE(f.good());
  f << text;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

TEST_CASE("config text sets every section") {
  ExperimentConfig cfg = ExperimentConfig::from_text(
      "# experiment\n"
      "corpus.vocab = 9   # inline comment\n"
      "corpus.noise_sigma = 0.25\n"
      "corpus.seed = 42\n"
      "\n"
      "model.blocks = 3\n"
      "model.width = 16\n"
      "model.ffn_width = 32\n"
      "model.heads = 4\n"
      "train.epochs = 5\n"
      "train.lr = 0.0005\n"
      "train.warmup = 0.2\n"
      "train.weight_decay = 0.01\n"
      "train.detach_mask_weights = true\n"
      "train.one_shot_eta = false\n"
      "budget.target = 0.75\n"
      "budget.eta = 0.02\n"
      "mode = ump\n"
      "sweep.targets = 0.25, 0.5\n"
      "sweep.modes = self_pinch, nascp\n"
      "compare.alpha = 0.01\n");
  CHECK(cfg.corpus.vocab == 9);
  CHECK(cfg.corpus.noise_sigma == 0.25);
  CHECK(cfg.corpus.seed == 42);
  CHECK(cfg.model.blocks == 3);
  CHECK(cfg.model.width == 16);
  CHECK(cfg.model.ffn_width == 32);
  CHECK(cfg.model.heads == 4);
  CHECK(cfg.train.epochs == 5);
  CHECK(cfg.train.lr == 0.0005);
  CHECK(cfg.train.warmup == 0.2);
  CHECK(cfg.train.weight_decay == 0.01);
  CHECK(cfg.train.detach_mask_weights);
  CHECK_FALSE(cfg.train.one_shot_eta);
  CHECK(cfg.budget.target == 0.75);
  CHECK(cfg.budget.eta == 0.02);
  CHECK(cfg.mode == Mode::Ump);
  REQUIRE(cfg.sweep_targets.size() == 2);
  CHECK(cfg.sweep_targets[0] == 0.25);
  CHECK(cfg.sweep_targets[1] == 0.5);
  REQUIRE(cfg.sweep_modes.size() == 2);
  CHECK(cfg.sweep_modes[0] == Mode::SelfPinch);
  CHECK(cfg.sweep_modes[1] == Mode::Nascp);
  CHECK(cfg.compare_alpha == 0.01);
}

TEST_CASE("empty config text keeps the defaults") {
  ExperimentConfig cfg = ExperimentConfig::from_text("");
  CHECK(cfg.corpus.vocab == 12);
  CHECK(cfg.model.width == 32);
  CHECK(cfg.mode == Mode::SelfPinch);
  REQUIRE(cfg.sweep_targets.size() == 2);
  CHECK(cfg.sweep_targets[0] == 0.5);
  CHECK(cfg.sweep_targets[1] == 0.75);
  CHECK(cfg.sweep_modes.size() == 4);
  CHECK(cfg.compare_alpha == 0.05);
}

TEST_CASE("config text rejections") {
  auto bad = [](const std::string& text) {
    CHECK_THROWS_AS(ExperimentConfig::from_text(text), ConfigError);
  };
  SUBCASE("unknown key") { bad("corpus.size = 4\n"); }
  SUBCASE("vocab only settable through the corpus") { bad("model.vocab = 9\n"); }
  SUBCASE("missing equals") { bad("corpus.vocab 9\n"); }
  SUBCASE("empty value") { bad("train.lr =\n"); }
  SUBCASE("empty key") { bad("= 3\n"); }
  SUBCASE("not a number") { bad("train.lr = fast\n"); }
  SUBCASE("trailing characters") { bad("train.lr = 0.1x\n"); }
  SUBCASE("fractional integer") { bad("model.width = 8.5\n"); }
  SUBCASE("seed must be an unsigned integer") { bad("corpus.seed = abc\n"); }
  SUBCASE("bad bool") { bad("train.one_shot_eta = yes\n"); }
  SUBCASE("bad mode") { bad("mode = magnitude\n"); }
  SUBCASE("dense listed as a sweep mode") { bad("sweep.modes = dense\n"); }
  SUBCASE("alpha on the boundary") { bad("compare.alpha = 1\n"); }
  SUBCASE("sweep target of one") { bad("sweep.targets = 0.5, 1.0\n"); }
  SUBCASE("invalid nested section") { bad("train.batch_size = 0\n"); }
}

TEST_CASE("validate catches direct mutations") {
  ExperimentConfig cfg = ExperimentConfig::from_text("");
  SUBCASE("no sweep targets") {
    cfg.sweep_targets.clear();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("alpha outside the open interval") {
    cfg.compare_alpha = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("dense sweep mode") {
    cfg.sweep_modes.push_back(Mode::Dense);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("config file loading") {
  testutil::TempDir tmp;
  std::string path = tmp.file("exp.cfg");
  spit(path, micro_config_text());
  ExperimentConfig cfg = ExperimentConfig::from_file(path);
  CHECK(cfg.corpus.vocab == 6);
  CHECK(cfg.model.width == 8);
  CHECK_THROWS_AS(ExperimentConfig::from_file(tmp.file("missing.cfg")), IoError);
}

TEST_CASE("resolve_out_dir roots relative paths under the env override") {
  testutil::TempDir tmp;
  unsetenv("PINCH_OUT_ROOT");
  CHECK(resolve_out_dir("runs") == "runs");

  std::string root = tmp.path.string();
  setenv("PINCH_OUT_ROOT", root.c_str(), 1);
  CHECK(resolve_out_dir("runs") == (tmp.path / "runs").string());
  CHECK(resolve_out_dir("/abs/runs") == "/abs/runs");

  setenv("PINCH_OUT_ROOT", "", 1);
  CHECK(resolve_out_dir("runs") == "runs");
  unsetenv("PINCH_OUT_ROOT");
}

TEST_CASE("train command writes the full artifact set deterministically") {
  testutil::TempDir tmp;
  ExperimentConfig cfg = ExperimentConfig::from_text(micro_config_text());
  std::string dir_a = tmp.file("run_a");
  std::string dir_b = tmp.file("run_b");
  CHECK(cmd_train(cfg, dir_a) == kExitOk);
  CHECK(cmd_train(cfg, dir_b) == kExitOk);

  namespace fs = std::filesystem;
  for (const char* name :
       {"checkpoint.ckpt", "metrics.csv", "dev_errors.txt", "test_errors.txt"}) {
    CAPTURE(name);
    REQUIRE(fs::exists(fs::path(dir_a) / name));
    CHECK(slurp(fs::path(dir_a) / name) == slurp(fs::path(dir_b) / name));
  }

  auto rows = lines_of(slurp(fs::path(dir_a) / "metrics.csv"));
  REQUIRE(rows.size() == 3);  // header + one row per epoch
  CHECK(rows[0] ==
        "epoch,steps,lr,tau,temperature,train_loss,sparsity,eta_active,dev_ter,"
        "s:b0.q,s:b0.k,s:b0.v,s:b0.o,s:b0.ffn1,s:b0.ffn2");
  for (size_t i = 1; i < rows.size(); ++i) {
    CHECK(split_csv(rows[i]).size() == 15);
  }
  CHECK(split_csv(rows[1])[0] == "1");
  CHECK(split_csv(rows[2])[0] == "2");

  auto dev_errors = lines_of(slurp(fs::path(dir_a) / "dev_errors.txt"));
  CHECK(dev_errors.size() == 3);  // one count per dev utterance

  Encoder model = Encoder::load_file((fs::path(dir_a) / "checkpoint.ckpt").string());
  CHECK(model.config().blocks == 1);
  for (const PrunableLinear* l : model.prunable()) {
    CHECK(l->attach == Attach::Gate);
  }

  ExperimentConfig other = cfg;
  other.train.seed = 8;
  std::string dir_c = tmp.file("run_c");
  CHECK(cmd_train(other, dir_c) == kExitOk);
  CHECK(slurp(fs::path(dir_a) / "metrics.csv") !=
        slurp(fs::path(dir_c) / "metrics.csv"));
}

TEST_CASE("eval command writes a per-split error file") {
  testutil::TempDir tmp;
  ExperimentConfig cfg = ExperimentConfig::from_text(micro_config_text());
  std::string train_dir = tmp.file("train");
  REQUIRE(cmd_train(cfg, train_dir) == kExitOk);
  std::string ckpt =
      (std::filesystem::path(train_dir) / "checkpoint.ckpt").string();

  std::string eval_dir = tmp.file("eval");
  CHECK(cmd_eval(cfg, ckpt, "dev", eval_dir) == kExitOk);
  auto dev = lines_of(slurp(std::filesystem::path(eval_dir) / "dev_errors.txt"));
  CHECK(dev.size() == 3);

  CHECK(cmd_eval(cfg, ckpt, "train", eval_dir) == kExitOk);
  auto train_errs =
      lines_of(slurp(std::filesystem::path(eval_dir) / "train_errors.txt"));
  CHECK(train_errs.size() == 8);

  CHECK_THROWS_AS(cmd_eval(cfg, ckpt, "validation", eval_dir), ConfigError);
  CHECK_THROWS_AS(cmd_eval(cfg, tmp.file("no.ckpt"), "dev", eval_dir), IoError);

  // The split evaluated through the command matches an in-process evaluation.
  Encoder model = Encoder::load_file(ckpt);
  Corpus corpus = generate(cfg.corpus);
  EvalResult r = evaluate(model, corpus.dev);
  REQUIRE(dev.size() == r.per_utt_errors.size());
  for (size_t i = 0; i < dev.size(); ++i) {
    CHECK(std::stoi(dev[i]) == r.per_utt_errors[i]);
  }
}

TEST_CASE("compare command exit codes") {
  testutil::TempDir tmp;
  std::string a = tmp.file("a.txt");
  std::string b = tmp.file("b.txt");

  SUBCASE("clearly separated systems are significant") {
    spit(a, "3\n1\n4\n2\n5\n");
    spit(b, "1\n1\n2\n2\n3\n");
    CHECK(cmd_compare(a, b, 0.05) == kExitSignificant);
    // The same evidence fails a stricter test.
    CHECK(cmd_compare(a, b, 0.01) == kExitOk);
  }
  SUBCASE("identical systems are not") {
    spit(a, "2\n0\n1\n");
    spit(b, "2\n0\n1\n");
    CHECK(cmd_compare(a, b, 0.05) == kExitOk);
  }
  SUBCASE("blank lines are tolerated") {
    spit(a, "2\n\n0\n");
    spit(b, "2\n0\n\n");
    CHECK(cmd_compare(a, b, 0.05) == kExitOk);
  }
  SUBCASE("malformed counts") {
    spit(a, "2\nabc\n");
    spit(b, "2\n0\n");
    CHECK_THROWS_AS(cmd_compare(a, b, 0.05), IoError);
  }
  SUBCASE("trailing junk on a line") {
    spit(a, "2 utt\n");
    spit(b, "2\n");
    CHECK_THROWS_AS(cmd_compare(a, b, 0.05), IoError);
  }
  SUBCASE("empty file") {
    spit(a, "\n");
    spit(b, "1\n");
    CHECK_THROWS_AS(cmd_compare(a, b, 0.05), IoError);
  }
  SUBCASE("missing file") {
    spit(a, "1\n");
    CHECK_THROWS_AS(cmd_compare(a, tmp.file("nope.txt"), 0.05), IoError);
  }
  SUBCASE("mismatched lengths") {
    spit(a, "1\n2\n");
    spit(b, "1\n");
    CHECK_THROWS_AS(cmd_compare(a, b, 0.05), ShapeError);
  }
}

TEST_CASE("transfer command maps a probe profile onto dense weights") {
  testutil::TempDir tmp;
  ExperimentConfig cfg = ExperimentConfig::from_text(micro_config_text());
  Corpus corpus = generate(cfg.corpus);
  EncoderConfig mcfg = cfg.model;
  mcfg.vocab = cfg.corpus.vocab;
  mcfg.feat_dim = cfg.corpus.feat_dim;

  TrainResult dense = run_one_pass(mcfg, cfg.train, cfg.budget, Mode::Dense, corpus);
  TrainResult gated =
      run_one_pass(mcfg, cfg.train, cfg.budget, Mode::SelfPinch, corpus);
  std::string dense_ckpt = tmp.file("dense.ckpt");
  std::string gated_ckpt = tmp.file("gated.ckpt");
  std::string out_ckpt = tmp.file("mixed.ckpt");
  dense.model.save_file(dense_ckpt);
  gated.model.save_file(gated_ckpt);

  CHECK(cmd_transfer(dense_ckpt, gated_ckpt, out_ckpt) == kExitOk);
  Encoder mixed = Encoder::load_file(out_ckpt);
  std::vector<double> profile = extract_layer_sparsities(gated.model);
  auto layers = mixed.prunable();
  auto donors = dense.model.prunable();
  REQUIRE(layers.size() == profile.size());
  for (size_t i = 0; i < layers.size(); ++i) {
    CHECK(layers[i]->attach == Attach::Mask);
    CHECK(layers[i]->w.values() == donors[i]->w.values());
    int n = layers[i]->w.size();
    double expect = std::floor(profile[i] * n) / n;
    CHECK(mixed.layer_sparsities()[i] == doctest::Approx(expect).epsilon(1e-12));
  }

  // A dense checkpoint carries no gates, so there is no profile to read.
  CHECK_THROWS_AS(cmd_transfer(dense_ckpt, dense_ckpt, tmp.file("x.ckpt")),
                  ShapeError);
  CHECK_THROWS_AS(cmd_transfer(tmp.file("no.ckpt"), gated_ckpt, out_ckpt),
                  IoError);
}

TEST_CASE("report command pretty-prints and validates") {
  testutil::TempDir tmp;
  std::string csv = tmp.file("sweep.csv");
  SUBCASE("well-formed") {
    spit(csv,
         "mode,target,sparsity,dev_ter,test_ter,z,p,lossless\n"
         "dense,0,0,0.1,0.12,0,1,yes\n"
         "self_pinch,0.5,0.5,0.11,0.13,0.4,0.7,yes\n");
    CHECK(cmd_report(csv) == kExitOk);
  }
  SUBCASE("short row") {
    spit(csv,
         "mode,target,sparsity,dev_ter,test_ter,z,p,lossless\n"
         "dense,0,0,0.1\n");
    CHECK_THROWS_AS(cmd_report(csv), IoError);
  }
  SUBCASE("no data rows") {
    spit(csv, "mode,target,sparsity,dev_ter,test_ter,z,p,lossless\n");
    CHECK_THROWS_AS(cmd_report(csv), IoError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(cmd_report(tmp.file("none.csv")), IoError);
  }
}

TEST_CASE("sweep command writes one row per mode and target plus the dense baseline") {
  testutil::TempDir tmp;
  ExperimentConfig cfg = ExperimentConfig::from_text(micro_config_text());
  cfg.sweep_targets = {0.5};
  cfg.sweep_modes = {Mode::SelfPinch, Mode::Ump, Mode::Mixed};
  std::string dir = tmp.file("sweep");
  CHECK(cmd_sweep(cfg, dir) == kExitOk);

  namespace fs = std::filesystem;
  auto rows = lines_of(slurp(fs::path(dir) / "sweep.csv"));
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "mode,target,sparsity,dev_ter,test_ter,z,p,lossless");
  auto dense_row = split_csv(rows[1]);
  REQUIRE(dense_row.size() == 8);
  CHECK(dense_row[0] == "dense");
  CHECK(dense_row[2] == "0");
  CHECK(dense_row[7] == "yes");
  CHECK(split_csv(rows[2])[0] == "self_pinch");
  CHECK(split_csv(rows[3])[0] == "ump");
  CHECK(split_csv(rows[4])[0] == "mixed");
  for (size_t i = 1; i < rows.size(); ++i) {
    auto fields = split_csv(rows[i]);
    REQUIRE(fields.size() == 8);
    CHECK((fields[7] == "yes" || fields[7] == "no"));
  }
  // The mixed run inherits the probe's per-layer budget, so the two report
  // identical sparsity.
  CHECK(split_csv(rows[2])[2] == split_csv(rows[4])[2]);

  for (const char* sub : {"dense", "self_pinch_0.5", "ump_0.5", "mixed_0.5"}) {
    CAPTURE(sub);
    for (const char* name : {"checkpoint.ckpt", "metrics.csv", "dev_errors.txt",
                             "test_errors.txt"}) {
      CHECK(fs::exists(fs::path(dir) / sub / name));
    }
  }

  CHECK(cmd_report((fs::path(dir) / "sweep.csv").string()) == kExitOk);
}
