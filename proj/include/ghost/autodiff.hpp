#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ghost/tensor.hpp"

namespace ghost::ad {

// Reverse-mode automatic differentiation over dense tensors.
//
// Graphs are built define-by-run: every op returns a Var referencing a fresh
// Node that records its parents and a backprop closure. backward() on a
// scalar root walks the graph in reverse topological order and accumulates
// exact gradients into every reachable node that requires them. Execution is
// single-threaded per graph; Tensors are plain values.

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first contribution, same shape as value
  bool requires_grad = false;
  bool grad_ready = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // pulls node.grad into parents

  Tensor& grad_buffer();  // zero-initialized on first use
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  // Var is a handle; in-place parameter updates go through here.
  Tensor& mutable_value() const { return node_->value; }
  const Tensor& grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  NodePtr node() const { return node_; }

  const std::vector<std::size_t>& shape() const { return value().shape(); }

  static Var from_node(NodePtr n) {
    Var v;
    v.node_ = std::move(n);
    return v;
  }

 private:
  NodePtr node_;
};

// Constant (non-differentiable) leaf.
Var constant(Tensor value);

// Custom node for fused ops with hand-derived gradients. The backprop
// closure reads the node's accumulated grad and adds each parent's share
// into parent->grad_buffer().
Var make_op(Tensor value, std::vector<NodePtr> parents,
            std::function<void(Node&)> backprop);

// Propagates d(root)/d(x) into every reachable x with requires_grad.
// Gradients accumulate additively across calls; zero_grad between steps.
void backward(const Var& root);
void zero_grad(std::span<const Var> params);

// ---- primitives -----------------------------------------------------------

Var add(const Var& a, const Var& b);           // same shape
Var sub(const Var& a, const Var& b);           // same shape
Var mul(const Var& a, const Var& b);           // elementwise, same shape
Var add_rowvec(const Var& m, const Var& row);  // (N,C) + (C)
Var scale(const Var& a, double k);
Var add_const(const Var& a, double k);
Var matmul(const Var& a, const Var& b);              // (N,K)x(K,M)
Var matmul_nt(const Var& a, const Var& b);           // (N,K)x(M,K)^T -> (N,M)
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var tanh_act(const Var& a);
Var exp_elem(const Var& a);
Var log_elem(const Var& a);
Var hinge(const Var& a);  // max(0, x); subgradient 0 at the kink
Var sum(const Var& a);                                // -> scalar
Var mean(const Var& a);                               // -> scalar
Var row_sum(const Var& a);                            // (N,C) -> (N)
Var gather_rows(const Var& m, std::vector<std::size_t> rows);
Var concat_cols(const Var& a, const Var& b);          // (N,A)+(N,B)->(N,A+B)
Var reshape(const Var& a, std::vector<std::size_t> shape);

// Picks m[i, cols[i]] per row -> (N).
Var select_cols(const Var& m, std::vector<std::size_t> cols);

// Stable log(sum_c mask[i,c] * exp(m[i,c])) per row -> (N). Rows whose mask
// is all zero are rejected.
Var masked_logsumexp(const Var& m, Tensor mask);

// L2 norm of each row with epsilon added: (N,d) -> (N).
Var row_norm(const Var& a, double eps);
// Rows rescaled to unit norm (epsilon-guarded).
Var normalize_rows(const Var& a, double eps);

// score[i][c] = <f_i, p_c> / ((|f_i|+eps)(|p_c|+eps)); exact zero-norm rows
// are an error.
Var cosine_scores(const Var& features, const Var& proxies, double eps = 1e-12);

// 2D convolution, NCHW, square kernel, unit dilation.
Var conv2d(const Var& input, const Var& kernel, const Var& bias, int stride,
           int pad);
// Non-overlapping max pooling with window w (input extents divisible by w).
Var max_pool2d(const Var& input, int window);

// Sums a 4D map (N,C,H,W) along width -> (N, C*H) and height -> (N, C*W).
Var pool_width_sum(const Var& a);
Var pool_height_sum(const Var& a);

}  // namespace ghost::ad
