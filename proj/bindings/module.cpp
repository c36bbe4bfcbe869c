#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "pinch/cli.hpp"
#include "pinch/ctc.hpp"
#include "pinch/gates.hpp"
#include "pinch/model.hpp"
#include "pinch/nascp.hpp"
#include "pinch/pruners.hpp"
#include "pinch/stats.hpp"
#include "pinch/training.hpp"

namespace py = pybind11;
using namespace pinch;

namespace {

Tensor tensor_from_array(const py::array_t<double>& a) {
  py::buffer_info info = a.request();
  std::vector<int> shape(info.shape.begin(), info.shape.end());
  auto contiguous = py::array_t<double, py::array::c_style | py::array::forcecast>(a);
  const double* p = contiguous.data();
  std::vector<double> values(p, p + contiguous.size());
  return Tensor::constant(shape, std::move(values));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> a(shape);
  std::copy(t.values().begin(), t.values().end(), a.mutable_data());
  return a;
}

SelfPinchGate make_gate(double t, double tau) {
  return SelfPinchGate::init(t, tau);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "layer-gated pruning core operations";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError",
                                          PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);

  m.def(
      "soft_mask",
      [](const py::array_t<double>& w, double t, double tau) {
        return array_from_tensor(
            soft_mask(tensor_from_array(w), make_gate(t, tau)).m);
      },
      py::arg("w"), py::arg("t"), py::arg("tau"),
      "differentiable mask sigmoid((w^2 - t^2) / tau)");

  m.def(
      "hard_mask",
      [](const py::array_t<double>& w, double t) {
        return array_from_tensor(
            hard_mask(tensor_from_array(w), make_gate(t, 1.0)).m);
      },
      py::arg("w"), py::arg("t"), "binary keep mask w^2 >= t^2");

  m.def(
      "layer_sparsity",
      [](const py::array_t<double>& w, double t) {
        return layer_sparsity(hard_mask(tensor_from_array(w), make_gate(t, 1.0)));
      },
      py::arg("w"), py::arg("t"), "zero fraction of the hard mask");

  m.def(
      "gated_forward",
      [](const py::array_t<double>& x, const py::array_t<double>& w,
         const py::array_t<double>& bias, double t, double tau) {
        return array_from_tensor(gated_forward(tensor_from_array(x),
                                               tensor_from_array(w),
                                               tensor_from_array(bias),
                                               make_gate(t, tau)));
      },
      py::arg("x"), py::arg("w"), py::arg("bias"), py::arg("t"),
      py::arg("tau"), "x @ (w * round(soft_mask)).T + bias");

  m.def(
      "ump_mask",
      [](const py::array_t<double>& w, double p) {
        return array_from_tensor(ump_mask(tensor_from_array(w), p).m);
      },
      py::arg("w"), py::arg("p"),
      "magnitude mask zeroing the floor(p*n) smallest entries");

  m.def(
      "ctc_loss",
      [](const py::array_t<double>& log_probs, const std::vector<int>& label) {
        return ctc_loss(tensor_from_array(log_probs), label).item();
      },
      py::arg("log_probs"), py::arg("label"),
      "CTC negative log-likelihood");

  m.def(
      "ctc_grad",
      [](const py::array_t<double>& log_probs, const std::vector<int>& label) {
        Tensor scores = tensor_from_array(log_probs);
        Tensor lp = Tensor::param(scores.shape(), scores.values());
        Tensor loss = ctc_loss(lp, label);
        backward(loss);
        Tensor g = Tensor::constant(lp.shape(), lp.grad());
        return array_from_tensor(g);
      },
      py::arg("log_probs"), py::arg("label"),
      "gradient of the CTC loss in the log-probability matrix");

  m.def(
      "greedy_decode",
      [](const py::array_t<double>& log_probs) {
        return greedy_decode(tensor_from_array(log_probs));
      },
      py::arg("log_probs"));

  m.def("edit_distance", &edit_distance, py::arg("a"), py::arg("b"));

  m.def(
      "token_error_rate",
      [](const std::vector<int>& hyp, const std::vector<int>& ref) {
        EditStats s = token_error_rate(hyp, ref);
        py::dict d;
        d["errors"] = s.errors;
        d["ref_len"] = s.ref_len;
        d["rate_defined"] = s.rate_defined;
        d["rate"] = s.rate;
        return d;
      },
      py::arg("hyp"), py::arg("ref"));

  m.def(
      "gumbel_lambda",
      [](const std::vector<double>& alpha, double temperature,
         const std::vector<double>& u) {
        Tensor a = Tensor::constant({static_cast<int>(alpha.size())}, alpha);
        return array_from_tensor(
            gumbel_lambda(a, temperature, std::span<const double>(u)));
      },
      py::arg("alpha"), py::arg("temperature"), py::arg("u"),
      "Gumbel-softmax architecture weights");

  m.def(
      "mapsswe",
      [](const std::vector<int>& a, const std::vector<int>& b, double alpha) {
        MapssweResult r = mapsswe(a, b, alpha);
        py::dict d;
        d["z"] = r.z;
        d["p"] = r.p;
        d["significant"] = r.significant;
        d["degenerate"] = r.degenerate;
        d["small_sample"] = r.small_sample;
        d["segments"] = r.segments;
        return d;
      },
      py::arg("errors_a"), py::arg("errors_b"), py::arg("alpha") = 0.05,
      "matched-pairs segment error significance test");

  m.def("normal_two_tailed_p", &normal_two_tailed_p, py::arg("z"));

  m.def(
      "run_experiment",
      [](const std::string& config_text, const std::string& mode,
         const std::string& out_dir) {
        ExperimentConfig cfg = ExperimentConfig::from_text(config_text);
        if (!mode.empty()) cfg.mode = mode_from_name(mode);
        int rc = cmd_train(cfg, out_dir);
        py::dict d;
        d["exit_code"] = rc;
        d["out_dir"] = resolve_out_dir(out_dir);
        return d;
      },
      py::arg("config_text"), py::arg("mode") = "",
      py::arg("out_dir") = "out",
      "run one training pass from a config string and write its artifacts");

  m.def(
      "train_summary",
      [](const std::string& config_text, const std::string& mode) {
        ExperimentConfig cfg = ExperimentConfig::from_text(config_text);
        if (!mode.empty()) cfg.mode = mode_from_name(mode);
        EncoderConfig mcfg = cfg.model;
        mcfg.vocab = cfg.corpus.vocab;
        mcfg.feat_dim = cfg.corpus.feat_dim;
        Corpus corpus = generate(cfg.corpus);
        TrainResult res =
            run_one_pass(mcfg, cfg.train, cfg.budget, cfg.mode, corpus);
        EvalResult dev = evaluate(res.model, corpus.dev);
        EvalResult test = evaluate(res.model, corpus.test);
        py::dict d;
        d["sparsity"] = res.model.overall_sparsity();
        d["dev_ter"] = dev.ter;
        d["test_ter"] = test.ter;
        d["epochs"] = static_cast<int>(res.trace.size());
        d["pruning_params"] = res.model.count_pruning_params();
        return d;
      },
      py::arg("config_text"), py::arg("mode") = "",
      "train in-process and return summary numbers");
}
