#include "pinch/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

namespace pinch {

namespace {

int shape_size(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) n *= d;
  return n;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw DivergenceError(std::string(op) + " produced a non-finite value");
    }
  }
}

bool any_needs_grad(const std::vector<NodePtr>& inputs) {
  for (const auto& n : inputs) {
    if (n->needs_grad) return true;
  }
  return false;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
}

void require_matrix(const char* op, const Tensor& t) {
  require(t.rank() == 2, std::string(op) + ": expected a rank-2 tensor, got " +
                             shape_str(t.shape()));
}

// Numerically stable logistic function.
double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& TensorNode::grad_buf() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::wrap(NodePtr n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

Tensor Tensor::constant(std::vector<int> shape, std::vector<double> values) {
  require(static_cast<int>(values.size()) == shape_size(shape),
          "constant: " + std::to_string(values.size()) +
              " values do not fill shape " + shape_str(shape));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  return wrap(std::move(n));
}

Tensor Tensor::param(std::vector<int> shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node()->requires_grad = true;
  t.node()->needs_grad = true;
  return t;
}

Tensor Tensor::zeros(std::vector<int> shape) {
  int n = shape_size(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double v) { return constant({1}, {v}); }

int Tensor::rows() const {
  require(rank() == 2, "rows: tensor is not rank-2: " + shape_str(shape()));
  return shape()[0];
}

int Tensor::cols() const {
  require(rank() == 2, "cols: tensor is not rank-2: " + shape_str(shape()));
  return shape()[1];
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

double Tensor::item() const {
  require(size() == 1,
          "item: tensor has " + std::to_string(size()) + " elements");
  return values()[0];
}

namespace detail {

NodePtr make_op_node(const char* op, std::vector<int> shape,
                     std::vector<double> value, std::vector<NodePtr> inputs,
                     std::function<void(TensorNode&)> backward_fn) {
  check_finite(op, value);
  auto n = std::make_shared<TensorNode>();
  n->op = op;
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->inputs = std::move(inputs);
  n->needs_grad = any_needs_grad(n->inputs);
  if (n->needs_grad) n->backward_fn = std::move(backward_fn);
  return n;
}

}  // namespace detail

using detail::make_op_node;

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (int i = 0; i < a.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  auto na = a.node();
  auto nb = b.node();
  return Tensor::wrap(make_op_node(
      "add", a.shape(), std::move(out), {na, nb}, [na, nb](TensorNode& self) {
        if (na->needs_grad) {
          auto& g = na->grad_buf();
          for (int i = 0; i < self.size(); ++i) g[i] += self.grad[i];
        }
        if (nb->needs_grad) {
          auto& g = nb->grad_buf();
          for (int i = 0; i < self.size(); ++i) g[i] += self.grad[i];
        }
      }));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (int i = 0; i < a.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  auto na = a.node();
  auto nb = b.node();
  return Tensor::wrap(make_op_node(
      "sub", a.shape(), std::move(out), {na, nb}, [na, nb](TensorNode& self) {
        if (na->needs_grad) {
          auto& g = na->grad_buf();
          for (int i = 0; i < self.size(); ++i) g[i] += self.grad[i];
        }
        if (nb->needs_grad) {
          auto& g = nb->grad_buf();
          for (int i = 0; i < self.size(); ++i) g[i] -= self.grad[i];
        }
      }));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (int i = 0; i < a.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  auto na = a.node();
  auto nb = b.node();
  return Tensor::wrap(make_op_node(
      "mul", a.shape(), std::move(out), {na, nb}, [na, nb](TensorNode& self) {
        if (na->needs_grad) {
          auto& g = na->grad_buf();
          for (int i = 0; i < self.size(); ++i)
            g[i] += self.grad[i] * nb->value[i];
        }
        if (nb->needs_grad) {
          auto& g = nb->grad_buf();
          for (int i = 0; i < self.size(); ++i)
            g[i] += self.grad[i] * na->value[i];
        }
      }));
}

Tensor scale(const Tensor& a, double c) {
  require(std::isfinite(c), "scale: factor must be finite");
  std::vector<double> out(a.size());
  for (int i = 0; i < a.size(); ++i) out[i] = a.values()[i] * c;
  auto na = a.node();
  return Tensor::wrap(make_op_node("scale", a.shape(), std::move(out), {na},
                                   [na, c](TensorNode& self) {
                                     if (!na->needs_grad) return;
                                     auto& g = na->grad_buf();
                                     for (int i = 0; i < self.size(); ++i)
                                       g[i] += self.grad[i] * c;
                                   }));
}

Tensor add_rowbias(const Tensor& x, const Tensor& bias) {
  require_matrix("add_rowbias", x);
  require(bias.rank() == 1 && bias.shape()[0] == x.cols(),
          "add_rowbias: bias " + shape_str(bias.shape()) +
              " does not match row width of " + shape_str(x.shape()));
  int m = x.rows(), n = x.cols();
  std::vector<double> out(x.values());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[i * n + j] += bias.values()[j];
  auto nx = x.node();
  auto nb = bias.node();
  return Tensor::wrap(make_op_node(
      "add_rowbias", x.shape(), std::move(out), {nx, nb},
      [nx, nb, m, n](TensorNode& self) {
        if (nx->needs_grad) {
          auto& g = nx->grad_buf();
          for (int i = 0; i < m * n; ++i) g[i] += self.grad[i];
        }
        if (nb->needs_grad) {
          auto& g = nb->grad_buf();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
        }
      }));
}

Tensor broadcast_mul(const Tensor& s, const Tensor& a) {
  require(s.size() == 1, "broadcast_mul: scale tensor must have one element, got " +
                             shape_str(s.shape()));
  double sv = s.values()[0];
  std::vector<double> out(a.size());
  for (int i = 0; i < a.size(); ++i) out[i] = sv * a.values()[i];
  auto ns = s.node();
  auto na = a.node();
  return Tensor::wrap(make_op_node(
      "broadcast_mul", a.shape(), std::move(out), {ns, na},
      [ns, na, sv](TensorNode& self) {
        if (ns->needs_grad) {
          auto& g = ns->grad_buf();
          double acc = 0.0;
          for (int i = 0; i < self.size(); ++i)
            acc += self.grad[i] * na->value[i];
          g[0] += acc;
        }
        if (na->needs_grad) {
          auto& g = na->grad_buf();
          for (int i = 0; i < self.size(); ++i) g[i] += self.grad[i] * sv;
        }
      }));
}

Tensor broadcast_sub(const Tensor& a, const Tensor& s) {
  require(s.size() == 1, "broadcast_sub: subtrahend must have one element, got " +
                             shape_str(s.shape()));
  double sv = s.values()[0];
  std::vector<double> out(a.size());
  for (int i = 0; i < a.size(); ++i) out[i] = a.values()[i] - sv;
  auto na = a.node();
  auto ns = s.node();
  return Tensor::wrap(make_op_node(
      "broadcast_sub", a.shape(), std::move(out), {na, ns},
      [na, ns](TensorNode& self) {
        if (na->needs_grad) {
          auto& g = na->grad_buf();
          for (int i = 0; i < self.size(); ++i) g[i] += self.grad[i];
        }
        if (ns->needs_grad) {
          auto& g = ns->grad_buf();
          double acc = 0.0;
          for (int i = 0; i < self.size(); ++i) acc += self.grad[i];
          g[0] -= acc;
        }
      }));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  require(a.cols() == b.rows(), "matmul: inner dimensions disagree, " +
                                    shape_str(a.shape()) + " * " +
                                    shape_str(b.shape()));
  int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  for (int i = 0; i < m; ++i) {
    for (int l = 0; l < k; ++l) {
      double av = pa[i * k + l];
      if (av == 0.0) continue;
      const double* brow = pb + l * n;
      double* orow = out.data() + i * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  auto na = a.node();
  auto nb = b.node();
  return Tensor::wrap(make_op_node(
      "matmul", {m, n}, std::move(out), {na, nb},
      [na, nb, m, k, n](TensorNode& self) {
        const double* g = self.grad.data();
        if (na->needs_grad) {
          // dA = dC * B^T
          auto& ga = na->grad_buf();
          const double* pb = nb->value.data();
          for (int i = 0; i < m; ++i)
            for (int l = 0; l < k; ++l) {
              double acc = 0.0;
              const double* grow = g + i * n;
              const double* brow = pb + l * n;
              for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
              ga[i * k + l] += acc;
            }
        }
        if (nb->needs_grad) {
          // dB = A^T * dC
          auto& gb = nb->grad_buf();
          const double* pa = na->value.data();
          for (int i = 0; i < m; ++i) {
            const double* grow = g + i * n;
            for (int l = 0; l < k; ++l) {
              double av = pa[i * k + l];
              if (av == 0.0) continue;
              double* brow = gb.data() + l * n;
              for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
            }
          }
        }
      }));
}

Tensor transpose(const Tensor& a) {
  require_matrix("transpose", a);
  int m = a.rows(), n = a.cols();
  std::vector<double> out(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[j * m + i] = a.values()[i * n + j];
  auto na = a.node();
  return Tensor::wrap(make_op_node("transpose", {n, m}, std::move(out), {na},
                                   [na, m, n](TensorNode& self) {
                                     if (!na->needs_grad) return;
                                     auto& g = na->grad_buf();
                                     for (int i = 0; i < m; ++i)
                                       for (int j = 0; j < n; ++j)
                                         g[i * n + j] += self.grad[j * m + i];
                                   }));
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  for (int i = 0; i < x.size(); ++i) out[i] = stable_sigmoid(x.values()[i]);
  auto nx = x.node();
  auto saved = out;
  return Tensor::wrap(make_op_node(
      "sigmoid", x.shape(), std::move(out), {nx},
      [nx, saved = std::move(saved)](TensorNode& self) {
        if (!nx->needs_grad) return;
        auto& g = nx->grad_buf();
        for (int i = 0; i < self.size(); ++i)
          g[i] += self.grad[i] * saved[i] * (1.0 - saved[i]);
      }));
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = std::numbers::sqrt2 / 2.0;
  std::vector<double> out(x.size());
  for (int i = 0; i < x.size(); ++i) {
    double v = x.values()[i];
    out[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  }
  auto nx = x.node();
  return Tensor::wrap(make_op_node(
      "gelu", x.shape(), std::move(out), {nx}, [nx](TensorNode& self) {
        if (!nx->needs_grad) return;
        constexpr double is2 = std::numbers::sqrt2 / 2.0;
        const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        auto& g = nx->grad_buf();
        for (int i = 0; i < self.size(); ++i) {
          double v = nx->value[i];
          double cdf = 0.5 * (1.0 + std::erf(v * is2));
          double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
          g[i] += self.grad[i] * (cdf + v * pdf);
        }
      }));
}

Tensor elem_log(const Tensor& x) {
  std::vector<double> out(x.size());
  for (int i = 0; i < x.size(); ++i) {
    require(x.values()[i] > 0.0,
            "elem_log: input must be strictly positive, got " +
                std::to_string(x.values()[i]));
    out[i] = std::log(x.values()[i]);
  }
  auto nx = x.node();
  return Tensor::wrap(make_op_node(
      "elem_log", x.shape(), std::move(out), {nx}, [nx](TensorNode& self) {
        if (!nx->needs_grad) return;
        auto& g = nx->grad_buf();
        for (int i = 0; i < self.size(); ++i)
          g[i] += self.grad[i] / nx->value[i];
      }));
}

Tensor ste_round(const Tensor& m) {
  std::vector<double> out(m.size());
  for (int i = 0; i < m.size(); ++i) {
    double v = m.values()[i];
    require(v >= 0.0 && v <= 1.0,
            "ste_round: input outside [0, 1]: " + std::to_string(v));
    out[i] = v >= 0.5 ? 1.0 : 0.0;
  }
  auto nm = m.node();
  return Tensor::wrap(make_op_node("ste_round", m.shape(), std::move(out),
                                   {nm}, [nm](TensorNode& self) {
                                     if (!nm->needs_grad) return;
                                     auto& g = nm->grad_buf();
                                     for (int i = 0; i < self.size(); ++i)
                                       g[i] += self.grad[i];
                                   }));
}

namespace {

// Shared softmax plumbing: rank-1 tensors are treated as one row.
void softmax_dims(const char* op, const Tensor& x, int* rows, int* cols) {
  if (x.rank() == 1) {
    *rows = 1;
    *cols = x.shape()[0];
  } else if (x.rank() == 2) {
    *rows = x.shape()[0];
    *cols = x.shape()[1];
  } else {
    throw ShapeError(std::string(op) + ": expected rank 1 or 2, got " +
                     shape_str(x.shape()));
  }
  require(*cols > 0, std::string(op) + ": empty rows");
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
  int m, n;
  softmax_dims("softmax_rows", x, &m, &n);
  std::vector<double> out(x.size());
  for (int i = 0; i < m; ++i) {
    const double* row = x.values().data() + i * n;
    double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(row[j] - mx);
      z += out[i * n + j];
    }
    for (int j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  auto nx = x.node();
  auto saved = out;
  return Tensor::wrap(make_op_node(
      "softmax_rows", x.shape(), std::move(out), {nx},
      [nx, saved = std::move(saved), m, n](TensorNode& self) {
        if (!nx->needs_grad) return;
        auto& g = nx->grad_buf();
        for (int i = 0; i < m; ++i) {
          double dot = 0.0;
          for (int j = 0; j < n; ++j)
            dot += self.grad[i * n + j] * saved[i * n + j];
          for (int j = 0; j < n; ++j)
            g[i * n + j] += saved[i * n + j] * (self.grad[i * n + j] - dot);
        }
      }));
}

Tensor log_softmax_rows(const Tensor& x) {
  int m, n;
  softmax_dims("log_softmax_rows", x, &m, &n);
  std::vector<double> out(x.size());
  for (int i = 0; i < m; ++i) {
    const double* row = x.values().data() + i * n;
    double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    double lse = mx + std::log(z);
    for (int j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
  }
  auto nx = x.node();
  auto saved = out;
  return Tensor::wrap(make_op_node(
      "log_softmax_rows", x.shape(), std::move(out), {nx},
      [nx, saved = std::move(saved), m, n](TensorNode& self) {
        if (!nx->needs_grad) return;
        auto& g = nx->grad_buf();
        for (int i = 0; i < m; ++i) {
          double gsum = 0.0;
          for (int j = 0; j < n; ++j) gsum += self.grad[i * n + j];
          for (int j = 0; j < n; ++j)
            g[i * n + j] +=
                self.grad[i * n + j] - std::exp(saved[i * n + j]) * gsum;
        }
      }));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  require_matrix("layer_norm", x);
  int m = x.rows(), n = x.cols();
  require(gain.rank() == 1 && gain.shape()[0] == n,
          "layer_norm: gain " + shape_str(gain.shape()) +
              " does not match row width " + std::to_string(n));
  require(bias.rank() == 1 && bias.shape()[0] == n,
          "layer_norm: bias " + shape_str(bias.shape()) +
              " does not match row width " + std::to_string(n));
  constexpr double eps = 1e-12;
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(m);
  for (int i = 0; i < m; ++i) {
    const double* row = x.values().data() + i * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += row[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= n;
    double inv = 1.0 / std::sqrt(var + eps);
    inv_std[i] = inv;
    for (int j = 0; j < n; ++j) {
      double xh = (row[j] - mu) * inv;
      xhat[i * n + j] = xh;
      out[i * n + j] = xh * gain.values()[j] + bias.values()[j];
    }
  }
  auto nx = x.node();
  auto ng = gain.node();
  auto nb = bias.node();
  return Tensor::wrap(make_op_node(
      "layer_norm", x.shape(), std::move(out), {nx, ng, nb},
      [nx, ng, nb, xhat = std::move(xhat), inv_std = std::move(inv_std), m,
       n](TensorNode& self) {
        for (int i = 0; i < m; ++i) {
          const double* g = self.grad.data() + i * n;
          const double* xh = xhat.data() + i * n;
          if (nx->needs_grad) {
            auto& gx = nx->grad_buf();
            double s1 = 0.0, s2 = 0.0;
            for (int j = 0; j < n; ++j) {
              double dxh = g[j] * ng->value[j];
              s1 += dxh;
              s2 += dxh * xh[j];
            }
            for (int j = 0; j < n; ++j) {
              double dxh = g[j] * ng->value[j];
              gx[i * n + j] +=
                  inv_std[i] * (dxh - s1 / n - xh[j] * s2 / n);
            }
          }
          if (ng->needs_grad) {
            auto& gg = ng->grad_buf();
            for (int j = 0; j < n; ++j) gg[j] += g[j] * xh[j];
          }
          if (nb->needs_grad) {
            auto& gb = nb->grad_buf();
            for (int j = 0; j < n; ++j) gb[j] += g[j];
          }
        }
      }));
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  auto nx = x.node();
  return Tensor::wrap(
      make_op_node("sum", {1}, {acc}, {nx}, [nx](TensorNode& self) {
        if (!nx->needs_grad) return;
        auto& g = nx->grad_buf();
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
      }));
}

Tensor mean(const Tensor& x) {
  require(x.size() > 0, "mean: empty tensor");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  double inv = 1.0 / x.size();
  auto nx = x.node();
  return Tensor::wrap(
      make_op_node("mean", {1}, {acc * inv}, {nx}, [nx, inv](TensorNode& self) {
        if (!nx->needs_grad) return;
        auto& g = nx->grad_buf();
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * inv;
      }));
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
  require_matrix("slice_cols", x);
  int m = x.rows(), n = x.cols();
  require(0 <= c0 && c0 < c1 && c1 <= n,
          "slice_cols: range [" + std::to_string(c0) + ", " +
              std::to_string(c1) + ") invalid for " + shape_str(x.shape()));
  int w = c1 - c0;
  std::vector<double> out(static_cast<size_t>(m) * w);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j) out[i * w + j] = x.values()[i * n + c0 + j];
  auto nx = x.node();
  return Tensor::wrap(make_op_node(
      "slice_cols", {m, w}, std::move(out), {nx},
      [nx, m, n, c0, w](TensorNode& self) {
        if (!nx->needs_grad) return;
        auto& g = nx->grad_buf();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < w; ++j)
            g[i * n + c0 + j] += self.grad[i * w + j];
      }));
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no parts");
  int m = parts[0].rows();
  int total = 0;
  for (const auto& p : parts) {
    require_matrix("concat_cols", p);
    require(p.rows() == m, "concat_cols: row counts disagree");
    total += p.cols();
  }
  std::vector<double> out(static_cast<size_t>(m) * total);
  std::vector<NodePtr> inputs;
  std::vector<int> widths;
  int off = 0;
  for (const auto& p : parts) {
    int w = p.cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        out[i * total + off + j] = p.values()[i * w + j];
    inputs.push_back(p.node());
    widths.push_back(w);
    off += w;
  }
  return Tensor::wrap(make_op_node(
      "concat_cols", {m, total}, std::move(out), inputs,
      [inputs, widths, m, total](TensorNode& self) {
        int off = 0;
        for (size_t p = 0; p < inputs.size(); ++p) {
          int w = widths[p];
          if (inputs[p]->needs_grad) {
            auto& g = inputs[p]->grad_buf();
            for (int i = 0; i < m; ++i)
              for (int j = 0; j < w; ++j)
                g[i * w + j] += self.grad[i * total + off + j];
          }
          off += w;
        }
      }));
}

Tensor element(const Tensor& x, int index) {
  require(index >= 0 && index < x.size(),
          "element: index " + std::to_string(index) + " out of range for " +
              shape_str(x.shape()));
  auto nx = x.node();
  return Tensor::wrap(make_op_node("element", {1}, {x.values()[index]}, {nx},
                                   [nx, index](TensorNode& self) {
                                     if (!nx->needs_grad) return;
                                     nx->grad_buf()[index] += self.grad[0];
                                   }));
}

Tensor detach(const Tensor& x) {
  return Tensor::constant(x.shape(), x.values());
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward: loss must be a defined scalar tensor");
  }
  TensorNode* root = loss.node().get();
  if (!root->needs_grad) {
    // Nothing reachable requires gradients.
    root->grad_buf()[0] += 1.0;
    return;
  }
  // Iterative post-order DFS; only subgraphs that need gradients are visited.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> done;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(root, 0);
  done.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    bool descended = false;
    while (next < node->inputs.size()) {
      TensorNode* in = node->inputs[next++].get();
      if (in->needs_grad && !done.count(in)) {
        done.insert(in);
        stack.emplace_back(in, 0);
        descended = true;
        break;
      }
    }
    if (!descended && next >= node->inputs.size()) {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Fresh transient gradients for interior nodes; leaves keep accumulating.
  for (TensorNode* n : order) {
    if (n->backward_fn) n->grad.assign(n->value.size(), 0.0);
  }
  root->grad_buf()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace pinch
