#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "umle/tensor.hpp"

namespace umle {

class Tape;

// One node of the per-iteration computation graph. Nodes are owned by the
// Tape and live until Tape::clear(); `Var` is a raw Node pointer.
struct Node {
  Tensor value;
  Tensor grad;  // lazily allocated; for parameter leaves this aliases the
                // parameter's grad buffer so backward accumulates in place
  std::vector<Node*> parents;
  std::function<void()> backward;  // reads this->grad, accumulates into parents
  bool needs_grad = false;
  bool is_leaf = true;
  Tape* tape = nullptr;

  // Accumulation target, allocated as zeros on first use.
  Tensor& grad_acc();
  double scalar() const { return value[0]; }
};

using Var = Node*;

// Dynamic reverse-mode tape. Creation order is a valid topological order;
// backward() walks it in reverse. Single-threaded by design: gradient
// accumulation order is fixed, so results are bitwise reproducible.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool needs_grad = false);
  // Leaf whose gradient accumulates into an external buffer (parameters).
  Var leaf_with_grad_sink(Tensor value, Tensor grad_sink);

  Var make(Tensor value, std::vector<Node*> parents, std::function<void()> backward_fn);

  // Seeds d(root)/d(root) = 1 and propagates to all leaves. Root must be a
  // scalar. Intermediate grad buffers are released as soon as consumed.
  void backward(Var root);

  void clear();
  std::size_t node_count() const { return nodes_.size(); }

  bool grad_enabled() const { return grad_enabled_; }
  void set_grad_enabled(bool on) { grad_enabled_ = on; }

 private:
  std::deque<std::unique_ptr<Node>> nodes_;
  bool grad_enabled_ = true;
};

// RAII guard for forward-only evaluation.
class NoGradGuard {
 public:
  explicit NoGradGuard(Tape& t) : tape_(t), prev_(t.grad_enabled()) { t.set_grad_enabled(false); }
  ~NoGradGuard() { tape_.set_grad_enabled(prev_); }

 private:
  Tape& tape_;
  bool prev_;
};

// ---- elementwise -----------------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_scalar(Var a, double s);
Var mul_scalar(Var a, double s);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh_op(Var a);
Var square(Var a);

// ---- reductions and broadcasts ---------------------------------------------
Var mean_all(Var a);                    // -> (1)
Var global_avg_pool(Var x);             // (N,C,H,W) -> (N,C,1,1)
Var mul_channel(Var x, Var s);          // s: (N,C,1,1), broadcast over H,W
Var mul_map(Var x, Var m);              // m: (N,1,H,W), broadcast over C
Var mean_channels(Var x);               // (N,C,H,W) -> (N,1,H,W)
Var max_channels(Var x);                // (N,C,H,W) -> (N,1,H,W); ties -> lowest channel
Var concat_channels(Var a, Var b);      // stack along C

// ---- fused losses -----------------------------------------------------------
Var mean_sq_diff_scalar(Var s, double target);  // mean((s - target)^2)
Var mean_abs_diff(Var a, Var b);                // mean|a - b|, d|0|/dx := 0
Var mean_sq_diff(Var a, Var b);                 // mean((a - b)^2)
Var bce_with_logits(Var s, double target01);    // mean(softplus(s) - target*s)

// ---- normalization -----------------------------------------------------------
// Fused instance/layer interpolation norm over (H,W) / (C,H,W) statistics:
//   y = gamma * (rho * x_in + (1 - rho) * x_ln) + beta
// gamma, beta, rho are per-channel (C). Pass rho = nullptr for pure instance
// norm (rho == 1). Variances are biased (divide by count).
Var lin_norm(Var x, Var gamma, Var beta, Var rho, double eps = 1e-5);

// ---- convolution and spatial ops (conv_ops.cpp) -----------------------------
// Zero padding, square kernels. w: (M, C, kh, kw), b: (M).
Var conv2d(Var x, Var w, Var b, int stride, int pad);
// 1-D convolution across the channel axis of a pooled (N,C,1,1) vector,
// zero-padded; w: (1,1,k) with odd k, b: (1). Channel count is preserved.
Var conv1d_channels(Var pooled, Var w, Var b);
// Per-channel convolution with one fixed (non-learnable) kernel and reflect
// padding. Gradient flows to x only.
Var depthwise_fixed_conv_reflect(Var x, const Tensor& kernel);
Var avg_pool2(Var x);           // 2x2 mean pooling, H and W must be even
Var upsample_nearest2(Var x);   // 2x nearest-neighbor
Var slice_spatial(Var x, int oy, int ox, int size);  // square crop

// Finite-difference helper used by tests and the acceptance suite: central
// differences of f() with respect to buf[index].
double central_difference(const std::function<double()>& f, double* slot, double h = 1e-5);

}  // namespace umle
