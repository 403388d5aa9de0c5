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

#ifndef NLAB_GRAPH_HPP_
#define NLAB_GRAPH_HPP_

#include <array>
#include <cstddef>
#include <deque>
#include <vector>

#include "nlab/tensor.hpp"

namespace nlab {

// Reverse-mode automatic differentiation over a tape of dense tensors.
//
// Nodes are appended in creation order, which is also a topological order,
// so backward() is a single reverse sweep over the tape. Gradients are
// accumulated in that fixed order; identical graphs therefore produce
// bitwise-identical gradients.

enum class OpKind {
  kLeaf,
  kAffine,
  kAdd,
  kSub,
  kMul,
  kScale,
  kOneMinus,
  kSigmoid,
  kTanh,
  kClip01,
  kAbs,
  kLogClamped,
  kStopGradient,
  kConcatCols,
  kSum,
};

const char* op_name(OpKind kind);

class Graph;

// Handle to a node of a Graph. Cheap to copy; it and the reference from
// value() stay valid while the graph lives.
class Var {
 public:
  Var() = default;

  Graph* graph() const { return graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf that never receives gradient.
  Var constant(Tensor value);
  // Leaf whose gradient is populated by backward().
  Var parameter(Tensor value);

  const Tensor& value(Var v) const { return node(v).value; }
  // Gradient after the last backward(); zeros for nodes it did not reach.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  OpKind kind(Var v) const { return node(v).kind; }
  std::size_t num_nodes() const { return nodes_.size(); }

  // Populates gradients of every node reachable from a scalar root.
  void backward(Var root);

  // Appends an op node. Used by the op functions below.
  Var append(OpKind kind, std::initializer_list<Var> inputs, Tensor value,
             double attr = 0.0);

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    std::array<std::size_t, 3> inputs{};
    std::size_t num_inputs = 0;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    double attr = 0.0;
  };

  const Node& node(Var v) const;
  void propagate(std::size_t id);

  // A deque keeps references from value() valid while nodes are appended.
  std::deque<Node> nodes_;
};

// out[i,j] = sum_k x[i,k] W[k,j] + bias[j]; x is b x n, W n x m, bias m.
Var affine(Var x, Var weights, Var bias);
Var add(Var a, Var b);
Var sub(Var a, Var b);
// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var one_minus(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
// min(max(x, 0), 1). Gradient passes where 0 <= x <= 1.
Var clip01(Var x);
// Subgradient 0 at x == 0.
Var abs(Var x);
// log(max(x, eps)); gradient 1/x above eps, 0 otherwise.
Var log_clamped(Var x, double eps);
// Identity forward; blocks all gradient to x.
Var stop_gradient(Var x);
// [a ; b] along columns; both b x n / b x m.
Var concat_cols(Var a, Var b);
// Sum of all elements, rank-0 result.
Var sum(Var x);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var x) { return scale(x, s); }

}  // namespace nlab

#endif  // NLAB_GRAPH_HPP_
