#pragma once

// Reverse-mode differentiation over a recorded list of tensor operations.
// Nodes are appended in execution order, which is already a topological
// order of the graph, so backward simply walks the list in reverse and each
// node adds its contribution into its inputs' gradients.

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "bima/functional.hpp"
#include "bima/param_store.hpp"
#include "bima/tensor.hpp"

namespace bima::nn {

struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
  bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
};

class Tape {
 public:
  // Called with the tape and the node's own id once its gradient is complete.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Var constant(Tensor value);
  Var leaf(Tensor value);  // owns a gradient buffer, read back with grad()
  Var param(ParamStore& store, std::size_t index);  // gradient accumulates into the store
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  // Gradient buffer of v, zero-initialized on first access.
  Tensor& grad(Var v);
  bool has_grad(Var v) const;

  // Seeds d(loss)/d(loss) = seed and propagates. loss must be a single value.
  void backward(Var loss, double seed = 1.0);

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    Tensor* grad_sink = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };
  Node& node(Var v);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Differentiable operations. Each records one node.
Var matmul(Tape& tape, Var a, Var b);
Var linear(Tape& tape, Var x, Var w, Var b);  // b may be an invalid Var for no bias
Var add(Tape& tape, Var a, Var b);
Var transpose(Tape& tape, Var x);
Var layer_norm(Tape& tape, Var x, Var gamma, Var beta, double eps = 1e-5);
Var gelu(Tape& tape, Var x);
Var dropout(Tape& tape, Var x, double p, bool training, Rng& rng);
Var concat_rows(Tape& tape, Var a, Var b);
Var flatten(Tape& tape, Var x);  // -> [1, numel]
Var weighted_sum(Tape& tape, Var x, const Tensor& weights);  // -> scalar sum(x * weights)
Var cross_entropy(Tape& tape, Var logits, std::span<const int> labels);  // -> scalar

struct AttentionTrace {
  std::vector<Tensor> weights;  // per head [T x T]
};

// Multi-head masked scaled dot-product attention over projected q, k, v
// ([T x heads*dk] each); heads occupy consecutive column blocks. The mask is
// a constant of the backward pass.
Var multi_head_attention(Tape& tape, Var q, Var k, Var v, std::size_t heads, bool mask_enabled,
                         double penalty, AttentionTrace* trace = nullptr);

}  // namespace bima::nn
