#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pinch/errors.hpp"

namespace pinch {

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One node of the reverse-mode tape. The tape is a DAG over shared_ptr
// edges; backward() visits every node reachable from the loss exactly once,
// in reverse topological order. Activations a backward pass needs are
// captured by value in backward_fn.
struct TensorNode {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized on first accumulation; persists on leaves
  bool requires_grad = false;
  bool needs_grad = false;  // some leaf below (or this one) requires grad
  const char* op = "leaf";
  std::vector<NodePtr> inputs;
  std::function<void(TensorNode&)> backward_fn;

  int size() const { return static_cast<int>(value.size()); }
  std::vector<double>& grad_buf();
};

std::string shape_str(const std::vector<int>& shape);

// Value-semantics handle onto a tape node; copies alias the same node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(std::vector<int> shape, std::vector<double> values);
  static Tensor param(std::vector<int> shape, std::vector<double> values);
  static Tensor zeros(std::vector<int> shape);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int size() const { return node_->size(); }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int rows() const;
  int cols() const;

  const std::vector<double>& values() const { return node_->value; }
  // Direct mutation is for leaves only (optimizer updates, data loading).
  std::vector<double>& values_mut() { return node_->value; }
  const std::vector<double>& grad() const { return node_->grad_buf(); }
  std::vector<double>& grad_mut() { return node_->grad_buf(); }
  void zero_grad();
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  const char* op() const { return node_->op; }
  NodePtr node() const { return node_; }
  static Tensor wrap(NodePtr n);

 private:
  NodePtr node_;
};

// Elementwise ops require identical shapes; the only implicit broadcasts are
// the row-bias add and the explicitly named single-element broadcast_* ops.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_rowbias(const Tensor& x, const Tensor& bias);
Tensor broadcast_mul(const Tensor& s, const Tensor& a);  // s has one element
Tensor broadcast_sub(const Tensor& a, const Tensor& s);  // s has one element
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);      // exact erf form, smooth everywhere
Tensor elem_log(const Tensor& x);  // requires strictly positive input
// Hard round with a straight-through backward: forward emits 1 where the
// input is >= 0.5 and 0 elsewhere; backward passes the incoming gradient
// through unchanged. Input must lie in [0, 1].
Tensor ste_round(const Tensor& m);
Tensor softmax_rows(const Tensor& x);      // rank-1 input is a single row
Tensor log_softmax_rows(const Tensor& x);  // rank-1 input is a single row
// Row-wise normalization to zero mean / unit variance followed by the
// learned affine map. The variance epsilon (1e-12) is far below the 1e-9
// the normalization contract allows, so normalized rows test as exactly
// unit-variance at double precision.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor slice_cols(const Tensor& x, int c0, int c1);  // [c0, c1)
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor element(const Tensor& x, int index);  // scalar pick at a flat index
Tensor detach(const Tensor& x);              // constant copy off the tape

// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every reachable
// node that needs them. Non-leaf gradients are reset per call; leaf
// gradients accumulate until zero_grad(), so repeated calls sum.
void backward(const Tensor& loss);

namespace detail {
// Node factory for ops defined outside tensor.cpp (e.g. the CTC loss).
NodePtr make_op_node(const char* op, std::vector<int> shape,
                     std::vector<double> value, std::vector<NodePtr> inputs,
                     std::function<void(TensorNode&)> backward_fn);
}  // namespace detail

}  // namespace pinch
