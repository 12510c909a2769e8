#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ttc/tensor.hpp"

namespace ttc::ad {

enum class UnaryOp { Tanh, Sigmoid, Relu, Exp, Log };
enum class BinaryOp { Add, Sub, Mul, MatMul };
enum class ReduceOp { Sum, Mean, Max };

const char* op_name(UnaryOp op);
const char* op_name(BinaryOp op);
const char* op_name(ReduceOp op);

class Tape;

// Per-node gradients produced by Tape::backward. Nodes that do not
// require gradients have no slot; untouched trainable nodes read back
// as zeros.
class GradientMap {
 public:
  Tensor grad(const Tensor& t) const;
  Tensor grad(int node_id) const;
  bool touched(int node_id) const;

 private:
  friend class Tape;
  explicit GradientMap(const Tape& tape) : tape_(&tape) {}
  std::vector<double>* slot(int node_id);

  const Tape* tape_;
  std::vector<std::vector<double>> grads_;
};

// Reverse-mode tape over dense tensors. Every operation records one node;
// node ids are assigned in topological (creation) order and backward walks
// them in exact reverse. A tape is single-use: after backward() it rejects
// further recording and a second backward.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a leaf holding a copy of t's values.
  Tensor leaf(const Tensor& t, bool requires_grad);
  Tensor constant(const Tensor& t) { return leaf(t, false); }
  Tensor constant(double v) { return leaf(Tensor::scalar(v), false); }

  Tensor apply_unary(UnaryOp op, const Tensor& x);
  Tensor tanh(const Tensor& x) { return apply_unary(UnaryOp::Tanh, x); }
  Tensor sigmoid(const Tensor& x) { return apply_unary(UnaryOp::Sigmoid, x); }
  Tensor relu(const Tensor& x) { return apply_unary(UnaryOp::Relu, x); }
  Tensor exp(const Tensor& x) { return apply_unary(UnaryOp::Exp, x); }
  Tensor log(const Tensor& x) { return apply_unary(UnaryOp::Log, x); }

  // Elementwise ops allow scalar broadcast of either side; matmul covers
  // matrix/matrix, matrix/vector, vector/matrix and vector dot.
  Tensor apply_binary(BinaryOp op, const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b) { return apply_binary(BinaryOp::Add, a, b); }
  Tensor sub(const Tensor& a, const Tensor& b) { return apply_binary(BinaryOp::Sub, a, b); }
  Tensor mul(const Tensor& a, const Tensor& b) { return apply_binary(BinaryOp::Mul, a, b); }
  Tensor matmul(const Tensor& a, const Tensor& b) { return apply_binary(BinaryOp::MatMul, a, b); }

  // Max routes its gradient to the first (lowest-index) maximizer.
  Tensor reduce(ReduceOp op, const Tensor& x, int axis);

  // Numerically stable (max-subtracted) softmax along the given axis.
  Tensor softmax(const Tensor& x, int axis);

  // -log softmax(logits)[target], fused log-sum-exp.
  Tensor cross_entropy(const Tensor& logits, int target);

  // Elementwise 0.5 d^2 for |d| < 1 else |d| - 0.5, averaged over elements.
  // The target side is treated as constant.
  Tensor smooth_l1(const Tensor& pred, const Tensor& target);

  // Row gather from a [V x E] table; backward scatter-adds into the table.
  Tensor embedding_lookup(const Tensor& table, const std::vector<int>& indices);

  // Elementwise stable binary cross-entropy on logits with 0/1 targets
  // (targets treated as constants).
  Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

  // Structural ops used to assemble recurrent models.
  Tensor concat(const std::vector<Tensor>& parts);          // 1-D
  Tensor slice(const Tensor& x, int start, int len);        // 1-D
  Tensor row(const Tensor& x, int r);                       // 2-D -> 1-D
  Tensor stack_rows(const std::vector<Tensor>& rows);       // n x [C] -> [n x C]
  Tensor scale_rows(const Tensor& x, const Tensor& a);      // [T x C] * [T]

  // 1-D convolution over time, kernel 3, zero padding; output row i is the
  // response at input position i*stride. w is [3C x F], b is [F].
  Tensor conv1d_k3(const Tensor& x, const Tensor& w, const Tensor& b, int stride);

  // Max-pools rows lo..hi (inclusive) of a [T x C] input into `bins`
  // contiguous bins, concatenated to [bins*C]. Ties go to the earliest row.
  Tensor roi_bin_maxpool(const Tensor& x, int lo, int hi, int bins);

  GradientMap backward(const Tensor& loss);

  int node_count() const { return static_cast<int>(nodes_.size()); }
  bool consumed() const { return backward_done_; }
  void clear();

  const Shape& node_shape(int id) const { return nodes_[static_cast<std::size_t>(id)].shape; }
  bool node_requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  const std::vector<double>& vals(int id) const { return nodes_[static_cast<std::size_t>(id)].values; }

 private:
  using BackFn = std::function<void(Tape&, const std::vector<double>&, GradientMap&)>;

  struct Node {
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    BackFn back;
  };

  int record(Shape shape, std::vector<double> values, bool requires_grad, BackFn back);
  Tensor wrap(int id) const;
  // Resolves a tensor to a node id, registering constants on the fly.
  int intern(const Tensor& t);
  bool req(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  void check_open(const char* what) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  std::uint64_t tag_;
};

}  // namespace ttc::ad
