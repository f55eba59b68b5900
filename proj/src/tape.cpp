#include "bima/tape.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "bima/error.hpp"
#include "bima/kernels.hpp"

namespace bima::nn {

using kernels::Trans;

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || v.id >= nodes_.size()) throw StateError("variable does not belong to this tape");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw StateError("variable does not belong to this tape");
  return nodes_[v.id];
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::param(ParamStore& store, std::size_t index) {
  Node n;
  n.borrowed = &store.value(index);
  n.grad_sink = &store.grad(index);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  Node n;
  n.owned = std::move(value);
  for (Var in : inputs) {
    if (in.valid() && node(in).requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.borrowed != nullptr ? *n.borrowed : n.owned;
}

bool Tape::requires_grad(Var v) const { return v.valid() && node(v).requires_grad; }

Tensor& Tape::grad(Var v) {
  Node& n = node(v);
  if (n.grad_sink != nullptr) return *n.grad_sink;
  if (n.grad.empty() && !value(v).empty()) n.grad = Tensor::zeros_like(value(v));
  return n.grad;
}

bool Tape::has_grad(Var v) const {
  const Node& n = node(v);
  return n.grad_sink != nullptr || !n.grad.empty();
}

void Tape::backward(Var loss, double seed) {
  if (nodes_.empty() || !loss.valid() || loss.id >= nodes_.size()) {
    throw StateError("backward called before a forward pass was recorded");
  }
  if (backward_done_) throw StateError("backward already ran on this tape; clear it first");
  if (value(loss).size() != 1) {
    throw ShapeError("backward expects a scalar loss, got " + shape_to_string(value(loss).shape()));
  }
  backward_done_ = true;
  if (!node(loss).requires_grad) return;
  grad(loss)[0] += seed;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(*this, i);
  }
}

void Tape::clear() {
  nodes_.clear();
  backward_done_ = false;
}

namespace {

bool needs(Tape& t, Var v) { return v.valid() && t.requires_grad(v); }

}  // namespace

Var matmul(Tape& tape, Var a, Var b) {
  Tensor out = nn::matmul(tape.value(a), tape.value(b));
  const Var inputs[] = {a, b};
  return tape.record(std::move(out), inputs, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(Var{self});
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (needs(t, a)) {
      kernels::gemm(Trans::no, Trans::yes, m, k, n, g.data(), n, bv.data(), n, t.grad(a).data(), k, true);
    }
    if (needs(t, b)) {
      kernels::gemm(Trans::yes, Trans::no, k, n, m, av.data(), k, g.data(), n, t.grad(b).data(), n, true);
    }
  });
}

Var linear(Tape& tape, Var x, Var w, Var b) {
  static const Tensor no_bias;
  Tensor out = linear_forward(tape.value(x), tape.value(w), b.valid() ? tape.value(b) : no_bias);
  const Var inputs[] = {x, w, b};
  return tape.record(std::move(out), inputs, [x, w, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(Var{self});
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    const std::size_t rows = xv.rows(), in = wv.dim(0), out = wv.dim(1);
    if (needs(t, x)) {
      kernels::gemm(Trans::no, Trans::yes, rows, in, out, g.data(), out, wv.data(), out,
                    t.grad(x).data(), in, true);
    }
    if (needs(t, w)) {
      kernels::gemm(Trans::yes, Trans::no, in, out, rows, xv.data(), in, g.data(), out,
                    t.grad(w).data(), out, true);
    }
    if (needs(t, b)) {
      Tensor& gb = t.grad(b);
      for (std::size_t r = 0; r < rows; ++r) kernels::axpy(out, 1.0, g.data() + r * out, gb.data());
    }
  });
}

Var add(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  if (av.shape() != bv.shape()) {
    throw ShapeError("add: " + shape_to_string(av.shape()) + " vs " + shape_to_string(bv.shape()));
  }
  Tensor out = av;
  kernels::axpy(out.size(), 1.0, bv.data(), out.data());
  const Var inputs[] = {a, b};
  return tape.record(std::move(out), inputs, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(Var{self});
    if (needs(t, a)) kernels::axpy(g.size(), 1.0, g.data(), t.grad(a).data());
    if (needs(t, b)) kernels::axpy(g.size(), 1.0, g.data(), t.grad(b).data());
  });
}

Var transpose(Tape& tape, Var x) {
  Tensor out = nn::transpose(tape.value(x));
  const Var inputs[] = {x};
  return tape.record(std::move(out), inputs, [x](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(Var{self});
    Tensor& gx = t.grad(x);
    const std::size_t r = g.dim(0), c = g.dim(1);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) gx[j * r + i] += g[i * c + j];
    }
  });
}

Var layer_norm(Tape& tape, Var x, Var gamma, Var beta, double eps) {
  auto cache = std::make_shared<LayerNormCache>();
  Tensor out = layer_norm_forward(tape.value(x), tape.value(gamma), tape.value(beta), eps, cache.get());
  const Var inputs[] = {x, gamma, beta};
  return tape.record(std::move(out), inputs, [x, gamma, beta, cache](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(Var{self});
    Tensor dx;
    Tensor* dgamma = needs(t, gamma) ? &t.grad(gamma) : nullptr;
    Tensor* dbeta = needs(t, beta) ? &t.grad(beta) : nullptr;
    layer_norm_backward(g, t.value(gamma), *cache, dx, dgamma, dbeta);
    if (needs(t, x)) kernels::axpy(dx.size(), 1.0, dx.data(), t.grad(x).data());
  });
}

Var gelu(Tape& tape, Var x) {
  Tensor out = gelu_forward(tape.value(x));
  const Var inputs[] = {x};
  return tape.record(std::move(out), inputs, [x](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(Var{self});
    const Tensor& xv = t.value(x);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * gelu_derivative(xv[i]);
  });
}

Var dropout(Tape& tape, Var x, double p, bool training, Rng& rng) {
  auto mask = std::make_shared<std::vector<double>>();
  Tensor out = dropout_forward(tape.value(x), p, training, rng, mask.get());
  const Var inputs[] = {x};
  return tape.record(std::move(out), inputs, [x, mask](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(Var{self});
    Tensor& gx = t.grad(x);
    if (mask->empty()) {
      kernels::axpy(g.size(), 1.0, g.data(), gx.data());
      return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
  });
}

Var concat_rows(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(1)) {
    throw ShapeError("concat_rows: " + shape_to_string(av.shape()) + " with " + shape_to_string(bv.shape()));
  }
  Tensor out({av.dim(0) + bv.dim(0), av.dim(1)});
  std::copy(av.values().begin(), av.values().end(), out.values().begin());
  std::copy(bv.values().begin(), bv.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(av.size()));
  const Var inputs[] = {a, b};
  return tape.record(std::move(out), inputs, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(Var{self});
    const std::size_t split = t.value(a).size();
    if (needs(t, a)) kernels::axpy(split, 1.0, g.data(), t.grad(a).data());
    if (needs(t, b)) kernels::axpy(g.size() - split, 1.0, g.data() + split, t.grad(b).data());
  });
}

Var flatten(Tape& tape, Var x) {
  Tensor out = tape.value(x);
  out.reshape({1, out.size()});
  const Var inputs[] = {x};
  return tape.record(std::move(out), inputs, [x](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(Var{self});
    kernels::axpy(g.size(), 1.0, g.data(), t.grad(x).data());
  });
}

Var weighted_sum(Tape& tape, Var x, const Tensor& weights) {
  const Tensor& xv = tape.value(x);
  if (xv.size() != weights.size()) {
    throw ShapeError("weighted_sum: " + shape_to_string(xv.shape()) + " with weights " +
                     shape_to_string(weights.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * weights[i];
  const Var inputs[] = {x};
  return tape.record(Tensor({1}, {s}), inputs, [x, weights](Tape& t, std::size_t self) {
    const double g = t.grad(Var{self})[0];
    kernels::axpy(weights.size(), g, weights.data(), t.grad(x).data());
  });
}

Var cross_entropy(Tape& tape, Var logits, std::span<const int> labels) {
  auto result = std::make_shared<CrossEntropy>(nn::cross_entropy(tape.value(logits), labels));
  const Var inputs[] = {logits};
  return tape.record(Tensor({1}, {result->loss}), inputs, [logits, result](Tape& t, std::size_t self) {
    const double g = t.grad(Var{self})[0];
    kernels::axpy(result->grad.size(), g, result->grad.data(), t.grad(logits).data());
  });
}

Var multi_head_attention(Tape& tape, Var q, Var k, Var v, std::size_t heads, bool mask_enabled,
                         double penalty, AttentionTrace* trace) {
  const Tensor& qv = tape.value(q);
  const Tensor& kv = tape.value(k);
  const Tensor& vv = tape.value(v);
  if (qv.rank() != 2 || qv.shape() != kv.shape() || qv.shape() != vv.shape()) {
    throw ShapeError("attention: q " + shape_to_string(qv.shape()) + ", k " + shape_to_string(kv.shape()) +
                     ", v " + shape_to_string(vv.shape()));
  }
  const std::size_t tokens = qv.dim(0), width = qv.dim(1);
  if (heads == 0 || width % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(width) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t dk = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  // The t x t weight blocks are fully overwritten by the kernel, so they
  // skip the zero fill a Tensor would do.
  auto weights = std::make_shared<std::vector<std::unique_ptr<double[]>>>();
  Tensor out({tokens, width});
  for (std::size_t h = 0; h < heads; ++h) {
    auto& w = weights->emplace_back(new double[tokens * tokens]);
    attention_head_forward(tokens, dk, qv.data() + h * dk, width, kv.data() + h * dk, width,
                           vv.data() + h * dk, width, scale, mask_enabled, penalty, w.get(),
                           out.data() + h * dk, width);
  }
  if (trace != nullptr) {
    trace->weights.clear();
    for (const auto& w : *weights) {
      trace->weights.emplace_back(Shape{tokens, tokens}, std::vector<double>(w.get(), w.get() + tokens * tokens));
    }
  }
  const Var inputs[] = {q, k, v};
  return tape.record(std::move(out), inputs, [q, k, v, heads, dk, scale, weights](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(Var{self});
    const Tensor& qv = t.value(q);
    const Tensor& kv = t.value(k);
    const Tensor& vv = t.value(v);
    const std::size_t tokens = qv.dim(0), width = qv.dim(1);
    // Scratch buffers keep the kernel call uniform even when some inputs are constants.
    Tensor dq(qv.shape()), dkk(kv.shape()), dv(vv.shape());
    for (std::size_t h = 0; h < heads; ++h) {
      attention_head_backward(tokens, dk, qv.data() + h * dk, width, kv.data() + h * dk, width,
                              vv.data() + h * dk, width, scale, (*weights)[h].get(), g.data() + h * dk,
                              width, dq.data() + h * dk, dkk.data() + h * dk, dv.data() + h * dk, width);
    }
    if (needs(t, q)) kernels::axpy(dq.size(), 1.0, dq.data(), t.grad(q).data());
    if (needs(t, k)) kernels::axpy(dkk.size(), 1.0, dkk.data(), t.grad(k).data());
    if (needs(t, v)) kernels::axpy(dv.size(), 1.0, dv.data(), t.grad(v).data());
  });
}

}  // namespace bima::nn
