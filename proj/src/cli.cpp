#include "pinch/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "pinch/ctc.hpp"
#include "pinch/pruners.hpp"
#include "pinch/stats.hpp"

namespace pinch {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  size_t pos = 0;
  double d;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config: value for " + key + " is not a number: '" + v +
                      "'");
  }
  if (pos != v.size()) {
    throw ConfigError("config: trailing characters in value for " + key);
  }
  return d;
}

int parse_int(const std::string& key, const std::string& v) {
  double d = parse_double(key, v);
  int i = static_cast<int>(d);
  if (static_cast<double>(i) != d) {
    throw ConfigError("config: " + key + " must be an integer, got '" + v + "'");
  }
  return i;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  size_t pos = 0;
  unsigned long long u;
  try {
    u = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config: value for " + key +
                      " is not a non-negative integer: '" + v + "'");
  }
  if (pos != v.size()) {
    throw ConfigError("config: trailing characters in value for " + key);
  }
  return u;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config: " + key + " must be true or false, got '" + v +
                    "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key or value");
    }

    if (key == "corpus.vocab") cfg.corpus.vocab = parse_int(key, val);
    else if (key == "corpus.label_min") cfg.corpus.label_min = parse_int(key, val);
    else if (key == "corpus.label_max") cfg.corpus.label_max = parse_int(key, val);
    else if (key == "corpus.frames_per_token_min")
      cfg.corpus.frames_per_token_min = parse_int(key, val);
    else if (key == "corpus.frames_per_token_max")
      cfg.corpus.frames_per_token_max = parse_int(key, val);
    else if (key == "corpus.feat_dim") cfg.corpus.feat_dim = parse_int(key, val);
    else if (key == "corpus.noise_sigma")
      cfg.corpus.noise_sigma = parse_double(key, val);
    else if (key == "corpus.train_size")
      cfg.corpus.train_size = parse_int(key, val);
    else if (key == "corpus.dev_size") cfg.corpus.dev_size = parse_int(key, val);
    else if (key == "corpus.test_size")
      cfg.corpus.test_size = parse_int(key, val);
    else if (key == "corpus.seed") cfg.corpus.seed = parse_u64(key, val);
    else if (key == "model.blocks") cfg.model.blocks = parse_int(key, val);
    else if (key == "model.width") cfg.model.width = parse_int(key, val);
    else if (key == "model.ffn_width")
      cfg.model.ffn_width = parse_int(key, val);
    else if (key == "model.heads") cfg.model.heads = parse_int(key, val);
    else if (key == "train.epochs") cfg.train.epochs = parse_int(key, val);
    else if (key == "train.batch_size")
      cfg.train.batch_size = parse_int(key, val);
    else if (key == "train.lr") cfg.train.lr = parse_double(key, val);
    else if (key == "train.warmup") cfg.train.warmup = parse_double(key, val);
    else if (key == "train.beta1") cfg.train.beta1 = parse_double(key, val);
    else if (key == "train.beta2") cfg.train.beta2 = parse_double(key, val);
    else if (key == "train.adam_eps")
      cfg.train.adam_eps = parse_double(key, val);
    else if (key == "train.weight_decay")
      cfg.train.weight_decay = parse_double(key, val);
    else if (key == "train.anneal_start")
      cfg.train.anneal_start = parse_double(key, val);
    else if (key == "train.anneal_end")
      cfg.train.anneal_end = parse_double(key, val);
    else if (key == "train.t_init") cfg.train.t_init = parse_double(key, val);
    else if (key == "train.detach_mask_weights")
      cfg.train.detach_mask_weights = parse_bool(key, val);
    else if (key == "train.one_shot_eta")
      cfg.train.one_shot_eta = parse_bool(key, val);
    else if (key == "train.seed") cfg.train.seed = parse_u64(key, val);
    else if (key == "budget.target")
      cfg.budget.target = parse_double(key, val);
    else if (key == "budget.eta") cfg.budget.eta = parse_double(key, val);
    else if (key == "mode") cfg.mode = mode_from_name(val);
    else if (key == "sweep.targets") {
      cfg.sweep_targets.clear();
      for (const auto& t : split_list(val)) {
        cfg.sweep_targets.push_back(parse_double(key, t));
      }
    } else if (key == "sweep.modes") {
      cfg.sweep_modes.clear();
      for (const auto& m : split_list(val)) {
        cfg.sweep_modes.push_back(mode_from_name(m));
      }
    } else if (key == "compare.alpha") {
      cfg.compare_alpha = parse_double(key, val);
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return from_text(buf.str());
}

void ExperimentConfig::validate() const {
  corpus.validate();
  // The corpus is the single source of truth for interface dimensions.
  EncoderConfig m = model;
  m.vocab = corpus.vocab;
  m.feat_dim = corpus.feat_dim;
  m.validate();
  train.validate();
  budget.validate();
  if (!(compare_alpha > 0.0 && compare_alpha < 1.0)) {
    throw ConfigError("config: compare.alpha must lie in (0, 1)");
  }
  if (sweep_targets.empty()) {
    throw ConfigError("config: sweep.targets must not be empty");
  }
  for (double t : sweep_targets) {
    if (!(t >= 0.0 && t < 1.0)) {
      throw ConfigError("config: sweep target " + std::to_string(t) +
                        " outside [0, 1)");
    }
  }
  for (Mode m2 : sweep_modes) {
    if (m2 == Mode::Dense) {
      throw ConfigError(
          "config: sweep.modes lists compression modes; the dense baseline "
          "always runs");
    }
  }
}

std::string resolve_out_dir(const std::string& dir) {
  const char* root = std::getenv("PINCH_OUT_ROOT");
  if (root && *root && fs::path(dir).is_relative()) {
    return (fs::path(root) / dir).string();
  }
  return dir;
}

namespace {

EncoderConfig effective_model_config(const ExperimentConfig& cfg) {
  EncoderConfig m = cfg.model;
  m.vocab = cfg.corpus.vocab;
  m.feat_dim = cfg.corpus.feat_dim;
  return m;
}

void write_error_file(const std::string& path, const std::vector<int>& errs) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  for (int e : errs) f << e << "\n";
  if (!f) throw IoError("failed writing " + path);
}

std::vector<int> read_error_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  std::vector<int> out;
  std::string line;
  while (std::getline(f, line)) {
    line = trim(line);
    if (line.empty()) continue;
    try {
      size_t pos = 0;
      int v = std::stoi(line, &pos);
      if (pos != line.size()) throw std::invalid_argument(line);
      out.push_back(v);
    } catch (const std::exception&) {
      throw IoError(path + ": expected one error count per line, got '" +
                    line + "'");
    }
  }
  if (out.empty()) throw IoError(path + ": no error counts found");
  return out;
}

void write_metrics_csv(const std::string& path, const Encoder& model,
                       const std::vector<EpochRow>& trace) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "epoch,steps,lr,tau,temperature,train_loss,sparsity,eta_active,dev_ter";
  for (const PrunableLinear* l : model.prunable()) f << ",s:" << l->name;
  f << "\n";
  for (const auto& r : trace) {
    f << r.epoch << "," << r.steps_done << "," << fmt_g(r.lr) << ","
      << fmt_g(r.tau) << "," << fmt_g(r.temperature) << ","
      << fmt_g(r.train_loss) << "," << fmt_g(r.sparsity) << ","
      << fmt_g(r.eta_active) << "," << fmt_g(r.dev_ter);
    for (double s : r.layer_sparsity) f << "," << fmt_g(s);
    f << "\n";
  }
  if (!f) throw IoError("failed writing " + path);
}

struct RunArtifacts {
  TrainResult result;
  EvalResult dev, test;
};

RunArtifacts train_and_eval(const ExperimentConfig& cfg, Mode mode,
                            const Corpus& corpus) {
  RunArtifacts a;
  a.result = run_one_pass(effective_model_config(cfg), cfg.train, cfg.budget,
                          mode, corpus);
  a.dev = evaluate(a.result.model, corpus.dev);
  a.test = evaluate(a.result.model, corpus.test);
  return a;
}

void write_run_outputs(const std::string& dir, const RunArtifacts& a) {
  fs::create_directories(dir);
  a.result.model.save_file((fs::path(dir) / "checkpoint.ckpt").string());
  write_metrics_csv((fs::path(dir) / "metrics.csv").string(), a.result.model,
                    a.result.trace);
  write_error_file((fs::path(dir) / "dev_errors.txt").string(),
                   a.dev.per_utt_errors);
  write_error_file((fs::path(dir) / "test_errors.txt").string(),
                   a.test.per_utt_errors);
}

}  // namespace

int cmd_train(const ExperimentConfig& cfg, const std::string& out_dir) {
  std::string dir = resolve_out_dir(out_dir);
  Corpus corpus = generate(cfg.corpus);
  RunArtifacts a = train_and_eval(cfg, cfg.mode, corpus);
  write_run_outputs(dir, a);
  std::cout << "mode=" << mode_name(cfg.mode)
            << " sparsity=" << fmt_g(a.result.model.overall_sparsity())
            << " dev_ter=" << fmt_g(a.dev.ter)
            << " test_ter=" << fmt_g(a.test.ter) << " out=" << dir << "\n";
  return kExitOk;
}

int cmd_transfer(const std::string& dense_ckpt, const std::string& gated_ckpt,
                 const std::string& out_ckpt) {
  Encoder dense = Encoder::load_file(dense_ckpt);
  Encoder gated = Encoder::load_file(gated_ckpt);
  std::vector<double> profile = extract_layer_sparsities(gated);
  Encoder mixed = mixed_sparsity_transfer(dense, profile);
  fs::path out(resolve_out_dir(out_ckpt));
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  mixed.save_file(out.string());
  auto layers = mixed.prunable();
  for (size_t i = 0; i < layers.size(); ++i) {
    std::cout << layers[i]->name << " " << fmt_g(profile[i]) << "\n";
  }
  std::cout << "overall=" << fmt_g(mixed.overall_sparsity())
            << " out=" << out.string() << "\n";
  return kExitOk;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& ckpt,
             const std::string& split, const std::string& out_dir) {
  Encoder model = Encoder::load_file(ckpt);
  Corpus corpus = generate(cfg.corpus);
  const std::vector<Utterance>* utts = nullptr;
  if (split == "train") utts = &corpus.train;
  else if (split == "dev") utts = &corpus.dev;
  else if (split == "test") utts = &corpus.test;
  else throw ConfigError("eval: split must be train, dev, or test");
  EvalResult r = evaluate(model, *utts);
  std::string dir = resolve_out_dir(out_dir);
  fs::create_directories(dir);
  write_error_file((fs::path(dir) / (split + "_errors.txt")).string(),
                   r.per_utt_errors);
  std::cout << "split=" << split << " ter=" << fmt_g(r.ter)
            << " errors=" << r.total_errors << " ref_tokens=" << r.total_ref
            << " sparsity=" << fmt_g(model.overall_sparsity()) << "\n";
  return kExitOk;
}

int cmd_compare(const std::string& errors_a, const std::string& errors_b,
                double alpha) {
  std::vector<int> a = read_error_file(errors_a);
  std::vector<int> b = read_error_file(errors_b);
  MapssweResult r = mapsswe(a, b, alpha);
  std::cout << "segments=" << r.segments << " z=" << fmt_g(r.z)
            << " p=" << fmt_g(r.p)
            << " significant=" << (r.significant ? "yes" : "no");
  if (r.degenerate) std::cout << " degenerate=yes";
  if (r.small_sample) std::cout << " small_sample=yes";
  std::cout << "\n";
  return r.significant ? kExitSignificant : kExitOk;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& out_dir) {
  std::string dir = resolve_out_dir(out_dir);
  fs::create_directories(dir);
  Corpus corpus = generate(cfg.corpus);

  std::cerr << "sweep: training dense baseline\n";
  RunArtifacts dense = train_and_eval(cfg, Mode::Dense, corpus);
  write_run_outputs((fs::path(dir) / "dense").string(), dense);

  std::ofstream csv(fs::path(dir) / "sweep.csv");
  if (!csv) throw IoError("cannot open sweep.csv for writing");
  csv << "mode,target,sparsity,dev_ter,test_ter,z,p,lossless\n";
  csv << "dense,0,0," << fmt_g(dense.dev.ter) << "," << fmt_g(dense.test.ter)
      << ",0,1,yes\n";

  // The gated run at each target doubles as the probe of the mixed run, and
  // the dense baseline doubles as its donor; artifacts are shared instead of
  // retrained (the results are identical either way, all runs being
  // deterministic in the seed).
  std::map<double, RunArtifacts> gated_runs;
  auto gated_at = [&](double target) -> RunArtifacts& {
    auto it = gated_runs.find(target);
    if (it != gated_runs.end()) return it->second;
    ExperimentConfig c = cfg;
    c.budget.target = target;
    std::cerr << "sweep: training self_pinch at target " << target << "\n";
    RunArtifacts a = train_and_eval(c, Mode::SelfPinch, corpus);
    return gated_runs.emplace(target, std::move(a)).first->second;
  };

  for (double target : cfg.sweep_targets) {
    for (Mode mode : cfg.sweep_modes) {
      RunArtifacts* arts = nullptr;
      RunArtifacts local;
      if (mode == Mode::SelfPinch) {
        arts = &gated_at(target);
      } else if (mode == Mode::Mixed) {
        RunArtifacts& probe = gated_at(target);
        local.result.model = mixed_sparsity_transfer(
            dense.result.model, extract_layer_sparsities(probe.result.model));
        local.result.trace = probe.result.trace;
        local.dev = evaluate(local.result.model, corpus.dev);
        local.test = evaluate(local.result.model, corpus.test);
        arts = &local;
      } else {
        ExperimentConfig c = cfg;
        c.budget.target = target;
        std::cerr << "sweep: training " << mode_name(mode) << " at target "
                  << target << "\n";
        local = train_and_eval(c, mode, corpus);
        arts = &local;
      }
      std::ostringstream sub;
      sub << mode_name(mode) << "_" << fmt_g(target);
      write_run_outputs((fs::path(dir) / sub.str()).string(), *arts);

      MapssweResult st = mapsswe(arts->test.per_utt_errors,
                                 dense.test.per_utt_errors, cfg.compare_alpha);
      csv << mode_name(mode) << "," << fmt_g(target) << ","
          << fmt_g(arts->result.model.overall_sparsity()) << ","
          << fmt_g(arts->dev.ter) << "," << fmt_g(arts->test.ter) << ","
          << fmt_g(st.z) << "," << fmt_g(st.p) << ","
          << (st.significant ? "no" : "yes") << "\n";
    }
  }
  csv.flush();
  if (!csv) throw IoError("failed writing sweep.csv");
  std::cout << "wrote " << (fs::path(dir) / "sweep.csv").string() << "\n";
  return cmd_report((fs::path(dir) / "sweep.csv").string());
}

int cmd_report(const std::string& sweep_csv) {
  std::ifstream f(sweep_csv);
  if (!f) throw IoError("cannot open " + sweep_csv);
  std::string line;
  if (!std::getline(f, line)) throw IoError(sweep_csv + ": empty file");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(f, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(split_list(line));
    if (rows.back().size() != 8) {
      throw IoError(sweep_csv + ": malformed row '" + line + "'");
    }
  }
  if (rows.empty()) throw IoError(sweep_csv + ": no data rows");
  std::printf("%-12s %8s %10s %9s %9s %9s %11s %9s\n", "mode", "target",
              "sparsity", "dev_ter", "test_ter", "z", "p", "lossless");
  for (const auto& r : rows) {
    std::printf("%-12s %8s %10s %9s %9s %9s %11s %9s\n", r[0].c_str(),
                r[1].c_str(), r[2].c_str(), r[3].c_str(), r[4].c_str(),
                r[5].c_str(), r[6].c_str(), r[7].c_str());
  }
  return kExitOk;
}

}  // namespace pinch
