/*
 * Copyright 2026 The Noisy Label Lab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "nlab/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nlab/errors.hpp"

namespace nlab {

namespace {

// Largest double below one; keeps sigmoid strictly inside (0, 1).
constexpr double kSigmoidCeil = 1.0 - 0x1.0p-53;
constexpr double kSigmoidFloor = std::numeric_limits<double>::min();

double stable_sigmoid(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  return std::clamp(s, kSigmoidFloor, kSigmoidCeil);
}

Graph& owner(Var v) {
  if (!v.valid()) throw UsageError("operation on an unbound Var");
  return *v.graph();
}

Graph& owner(Var a, Var b) {
  Graph& g = owner(a);
  if (b.graph() != &g) throw UsageError("operands belong to different graphs");
  return g;
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " +
                      shape_string(a.shape()) + " vs " +
                      shape_string(b.shape()));
  }
}

template <typename F>
Tensor map_values(const Tensor& x, F f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAffine: return "affine";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kOneMinus: return "one_minus";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kClip01: return "clip01";
    case OpKind::kAbs: return "abs";
    case OpKind::kLogClamped: return "log_clamped";
    case OpKind::kStopGradient: return "stop_gradient";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kSum: return "sum";
  }
  return "unknown";
}

const Tensor& Var::value() const { return owner(*this).value(*this); }

const Graph::Node& Graph::node(Var v) const {
  if (v.graph() != this || v.id() >= nodes_.size()) {
    throw UsageError("Var does not belong to this graph");
  }
  return nodes_[v.id()];
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Tensor value) {
  Var v = constant(std::move(value));
  nodes_.back().requires_grad = true;
  return v;
}

Var Graph::append(OpKind kind, std::initializer_list<Var> inputs, Tensor value,
                  double attr) {
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  n.attr = attr;
  for (Var in : inputs) {
    const Node& src = node(in);
    n.inputs[n.num_inputs++] = in.id();
    n.requires_grad = n.requires_grad || src.requires_grad;
  }
  if (kind == OpKind::kStopGradient) n.requires_grad = false;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor Graph::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.shape() == n.value.shape()) return n.grad;
  return Tensor(n.value.shape());
}

void Graph::backward(Var root) {
  const Node& r = node(root);
  if (r.value.size() != 1) {
    throw UsageError("backward() needs a scalar root, got shape " +
                     shape_string(r.value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  if (!r.requires_grad) return;
  for (std::size_t i = 0; i <= root.id(); ++i) {
    if (nodes_[i].requires_grad) nodes_[i].grad = Tensor(nodes_[i].value.shape());
  }
  nodes_[root.id()].grad[0] = 1.0;
  // Only nodes on a differentiable path from the root are visited.
  std::vector<bool> reached(root.id() + 1, false);
  reached[root.id()] = true;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!reached[i] || !n.requires_grad || n.kind == OpKind::kLeaf) continue;
    propagate(i);
    for (std::size_t k = 0; k < n.num_inputs; ++k) reached[n.inputs[k]] = true;
  }
}

void Graph::propagate(std::size_t id) {
  const Node& n = nodes_[id];
  const Tensor& g = n.grad;
  auto input = [&](std::size_t k) -> Node& { return nodes_[n.inputs[k]]; };
  auto wants = [&](std::size_t k) { return input(k).requires_grad; };

  switch (n.kind) {
    case OpKind::kLeaf:
    case OpKind::kStopGradient:
      return;

    case OpKind::kAffine: {
      const Tensor& x = input(0).value;
      const Tensor& w = input(1).value;
      const std::size_t b = x.rows(), in = x.cols(), out = w.cols();
      if (wants(0)) {
        Tensor& dx = input(0).grad;
        for (std::size_t i = 0; i < b; ++i) {
          const double* gi = g.data() + i * out;
          for (std::size_t k = 0; k < in; ++k) {
            const double* wk = w.data() + k * out;
            double acc = 0.0;
            for (std::size_t j = 0; j < out; ++j) acc += gi[j] * wk[j];
            dx[i * in + k] += acc;
          }
        }
      }
      if (wants(1)) {
        Tensor& dw = input(1).grad;
        for (std::size_t i = 0; i < b; ++i) {
          const double* gi = g.data() + i * out;
          for (std::size_t k = 0; k < in; ++k) {
            const double xik = x[i * in + k];
            if (xik == 0.0) continue;
            double* dwk = dw.data() + k * out;
            for (std::size_t j = 0; j < out; ++j) dwk[j] += xik * gi[j];
          }
        }
      }
      if (wants(2)) {
        Tensor& db = input(2).grad;
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t j = 0; j < out; ++j) db[j] += g[i * out + j];
        }
      }
      return;
    }

    case OpKind::kAdd:
    case OpKind::kSub: {
      const double sign = n.kind == OpKind::kAdd ? 1.0 : -1.0;
      if (wants(0)) {
        Tensor& da = input(0).grad;
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      }
      if (wants(1)) {
        Tensor& db = input(1).grad;
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += sign * g[i];
      }
      return;
    }

    case OpKind::kMul: {
      const Tensor& a = input(0).value;
      const Tensor& b = input(1).value;
      if (wants(0)) {
        Tensor& da = input(0).grad;
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b[i];
      }
      if (wants(1)) {
        Tensor& db = input(1).grad;
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a[i];
      }
      return;
    }

    case OpKind::kScale: {
      Tensor& dx = input(0).grad;
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += n.attr * g[i];
      return;
    }

    case OpKind::kOneMinus: {
      Tensor& dx = input(0).grad;
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] -= g[i];
      return;
    }

    case OpKind::kSigmoid: {
      Tensor& dx = input(0).grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = n.value[i];
        dx[i] += g[i] * s * (1.0 - s);
      }
      return;
    }

    case OpKind::kTanh: {
      Tensor& dx = input(0).grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double t = n.value[i];
        dx[i] += g[i] * (1.0 - t * t);
      }
      return;
    }

    case OpKind::kClip01: {
      const Tensor& x = input(0).value;
      Tensor& dx = input(0).grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] >= 0.0 && x[i] <= 1.0) dx[i] += g[i];
      }
      return;
    }

    case OpKind::kAbs: {
      const Tensor& x = input(0).value;
      Tensor& dx = input(0).grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > 0.0) {
          dx[i] += g[i];
        } else if (x[i] < 0.0) {
          dx[i] -= g[i];
        }
      }
      return;
    }

    case OpKind::kLogClamped: {
      const Tensor& x = input(0).value;
      Tensor& dx = input(0).grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > n.attr) dx[i] += g[i] / x[i];
      }
      return;
    }

    case OpKind::kConcatCols: {
      const std::size_t rows = n.value.rows(), cols = n.value.cols();
      const std::size_t left = input(0).value.cols();
      const std::size_t right = cols - left;
      if (wants(0)) {
        Tensor& da = input(0).grad;
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < left; ++j) {
            da[i * left + j] += g[i * cols + j];
          }
        }
      }
      if (wants(1)) {
        Tensor& db = input(1).grad;
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < right; ++j) {
            db[i * right + j] += g[i * cols + left + j];
          }
        }
      }
      return;
    }

    case OpKind::kSum: {
      Tensor& dx = input(0).grad;
      const double g0 = g[0];
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g0;
      return;
    }
  }
}

Var affine(Var x, Var weights, Var bias) {
  Graph& g = owner(x, weights);
  owner(x, bias);
  const Tensor& xv = x.value();
  const Tensor& wv = weights.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1) {
    throw ConfigError("affine: expected x[b x n], W[n x m], bias[m], got x" +
                      shape_string(xv.shape()) + " W" +
                      shape_string(wv.shape()) + " bias" +
                      shape_string(bv.shape()));
  }
  const std::size_t b = xv.rows(), in = xv.cols(), out = wv.cols();
  if (wv.rows() != in || bv.size() != out) {
    throw ConfigError("affine: x has " + std::to_string(in) +
                      " columns but W is " + shape_string(wv.shape()) +
                      " and bias has " + std::to_string(bv.size()) +
                      " entries");
  }
  Tensor out_t(Shape{b, out});
  for (std::size_t i = 0; i < b; ++i) {
    double* oi = out_t.data() + i * out;
    for (std::size_t j = 0; j < out; ++j) oi[j] = 0.0;
    for (std::size_t k = 0; k < in; ++k) {
      const double xik = xv[i * in + k];
      if (xik == 0.0) continue;
      const double* wk = wv.data() + k * out;
      for (std::size_t j = 0; j < out; ++j) oi[j] += xik * wk[j];
    }
    for (std::size_t j = 0; j < out; ++j) oi[j] += bv[j];
  }
  return g.append(OpKind::kAffine, {x, weights, bias}, std::move(out_t));
}

Var add(Var a, Var b) {
  Graph& g = owner(a, b);
  require_same_shape("add", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return g.append(OpKind::kAdd, {a, b}, std::move(out));
}

Var sub(Var a, Var b) {
  Graph& g = owner(a, b);
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return g.append(OpKind::kSub, {a, b}, std::move(out));
}

Var mul(Var a, Var b) {
  Graph& g = owner(a, b);
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return g.append(OpKind::kMul, {a, b}, std::move(out));
}

Var scale(Var x, double factor) {
  Graph& g = owner(x);
  return g.append(OpKind::kScale, {x},
                  map_values(x.value(), [&](double v) { return factor * v; }),
                  factor);
}

Var one_minus(Var x) {
  return owner(x).append(OpKind::kOneMinus, {x},
                         map_values(x.value(), [](double v) { return 1.0 - v; }));
}

Var sigmoid(Var x) {
  return owner(x).append(OpKind::kSigmoid, {x},
                         map_values(x.value(), stable_sigmoid));
}

Var tanh(Var x) {
  return owner(x).append(OpKind::kTanh, {x}, map_values(x.value(), [](double v) {
                           return std::tanh(v);
                         }));
}

Var clip01(Var x) {
  return owner(x).append(OpKind::kClip01, {x}, map_values(x.value(), [](double v) {
                           return std::min(std::max(v, 0.0), 1.0);
                         }));
}

Var abs(Var x) {
  return owner(x).append(OpKind::kAbs, {x}, map_values(x.value(), [](double v) {
                           return std::fabs(v);
                         }));
}

Var log_clamped(Var x, double eps) {
  return owner(x).append(OpKind::kLogClamped, {x},
                         map_values(x.value(),
                                    [&](double v) {
                                      return std::log(std::max(v, eps));
                                    }),
                         eps);
}

Var stop_gradient(Var x) {
  return owner(x).append(OpKind::kStopGradient, {x}, x.value());
}

Var concat_cols(Var a, Var b) {
  Graph& g = owner(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.rows() != bv.rows()) {
    throw ConfigError("concat_cols: row mismatch " + shape_string(av.shape()) +
                      " vs " + shape_string(bv.shape()));
  }
  const std::size_t rows = av.rows(), left = av.cols(), right = bv.cols();
  Tensor out(Shape{rows, left + right});
  for (std::size_t i = 0; i < rows; ++i) {
    std::copy_n(av.data() + i * left, left, out.data() + i * (left + right));
    std::copy_n(bv.data() + i * right, right,
                out.data() + i * (left + right) + left);
  }
  return g.append(OpKind::kConcatCols, {a, b}, std::move(out));
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  return owner(x).append(OpKind::kSum, {x}, Tensor::scalar(total));
}

}  // namespace nlab
