#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "vlplab/rng.hpp"
#include "vlplab/tensor.hpp"

namespace vlplab {

// Handle to a node on a GradTape.
struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

struct BatchNormStats {
  Tensor mean;  // per-feature batch mean
  Tensor var;   // per-feature biased batch variance
};

// Reverse-mode tape. One training step owns one tape: record the forward
// pass through the ops below, then call backward() on the scalar loss.
// Gradients accumulate additively, and replay order is the exact reverse of
// execution order, so results are bitwise reproducible.
class GradTape {
 public:
  GradTape() { nodes_.reserve(256); }
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  Var leaf(Tensor value);      // differentiable input (parameter)
  Var constant(Tensor value);  // gradient stops here

  const Tensor& value(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }
  // Gradient accumulated for v; zeros if backward never reached it.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].requires_grad; }

  void backward(Var scalar_root);
  size_t size() const { return nodes_.size(); }

  // ---- elementwise ----
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var sub_const(Var a, const Tensor& c);   // a - c
  Var mul_const(Var a, const Tensor& c);   // a ⊙ c
  Var relu(Var a);
  Var exp(Var a);

  // ---- linear algebra ----
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  // x @ w (+ b broadcast over rows); pass an invalid Var for bias-free.
  Var linear(Var x, Var w, Var b);
  Var l2_normalize_rows(Var a);
  Var l2_normalize_cols(Var a);

  // ---- reductions / softmax ----
  Var sum_all(Var a);
  Var mean_all(Var a);
  Var softmax_rows(Var a);
  // Fused log-softmax cross entropy against constant target rows; scalar out.
  Var cross_entropy_rows(Var logits, const Tensor& targets);
  // a scaled by a 1-element variable (learnable logit scale).
  Var mul_scalar(Var a, Var s);

  // ---- structured ----
  Var gather_rows(Var table, std::vector<int64_t> ids);
  // offsets has S+1 entries; output row s is the mean of input rows
  // [offsets[s], offsets[s+1]).
  Var segment_mean(Var a, std::vector<int64_t> offsets);
  // Inverted dropout: zero w.p. prob, scale survivors by 1/(1-prob).
  Var dropout(Var a, double prob, Rng& rng);
  Var batchnorm_train(Var x, Var gamma, Var beta, double eps, BatchNormStats* stats_out);
  Var batchnorm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean,
                     const Tensor& running_var, double eps);

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched by backward
    bool requires_grad = false;
    std::function<void(GradTape&)> backward;
  };

  Var push(Tensor value, bool requires_grad, std::function<void(GradTape&)> backward);
  Tensor& grad_buf(int32_t id);
  void accumulate(int32_t id, const Tensor& delta);
  const Tensor& node_grad(int32_t id) const { return nodes_[static_cast<size_t>(id)].grad; }
  const Tensor& node_value(int32_t id) const { return nodes_[static_cast<size_t>(id)].value; }

  std::vector<Node> nodes_;
};

}  // namespace vlplab
