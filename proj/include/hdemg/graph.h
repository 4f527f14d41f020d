// Copyright 2026 The hdemg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef HDEMG_GRAPH_H_
#define HDEMG_GRAPH_H_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hdemg/tensor.h"

namespace hdemg {

// Handle to a node of a Graph. Only meaningful for the graph that issued it.
struct Var {
  std::uint32_t id = 0;
};

// Define-by-run reverse-mode differentiation tape.
//
// Every builder method evaluates its result immediately and appends one node.
// Backward() visits the nodes in exact reverse order of creation. A node
// requires a gradient iff one of its inputs does; leaves created by
// Parameter(value, true) are the roots of that relation. A graph is meant to
// be built for one batch and thrown away.
//
// All operations except SoftmaxCrossEntropy and Sum work on rank-2 values
// (rows x cols). Bias rows and scalars may be rank 1.
class Graph {
 public:
  enum class Op : std::uint8_t {
    kLeaf,
    kMatMul,
    kMatMulT,
    kAdd,
    kAddRow,
    kMul,
    kTanh,
    kSigmoid,
    kSliceRows,
    kSliceCols,
    kConcatRows,
    kConcatCols,
    kDropout,
    kGatherRows,
    kSum,
    kSoftmaxCrossEntropy,
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var Constant(Tensor value);
  Var Parameter(Tensor value, bool requires_grad = true);

  // a[m x k] * b[k x n]
  Var MatMul(Var a, Var b);
  // a[m x k] * b[n x k]^T; weights are stored out x in.
  Var MatMulT(Var a, Var b);
  Var Add(Var a, Var b);
  // a[m x n] + row broadcast over rows; row has n elements.
  Var AddRow(Var a, Var row);
  Var Mul(Var a, Var b);
  Var Tanh(Var a);
  Var Sigmoid(Var a);
  Var SliceRows(Var a, std::size_t begin, std::size_t end);
  Var SliceCols(Var a, std::size_t begin, std::size_t end);
  Var ConcatRows(std::span<const Var> parts);
  Var ConcatCols(std::span<const Var> parts);
  // a * mask elementwise; mask carries the inverted-dropout scale already.
  Var Dropout(Var a, Tensor mask);
  Var GatherRows(Var table, std::vector<std::size_t> rows);
  Var Sum(Var a);
  // Mean over the batch of -log softmax(logits)[label]. The value is a
  // scalar; Probabilities() returns the softmax rows.
  Var SoftmaxCrossEntropy(Var logits, std::vector<std::size_t> labels);

  const Tensor& value(Var v) const;
  // Probabilities of a SoftmaxCrossEntropy node.
  const Tensor& Probabilities(Var v) const;
  bool requires_grad(Var v) const;
  Op op(Var v) const;

  // Gradient of the last Backward() loss w.r.t. v. Untouched nodes and
  // leaves return zeros of the value's shape.
  Tensor grad(Var v) const;
  bool has_grad(Var v) const;

  // Reverse sweep from a scalar loss. Unless retain_intermediate_grads is set,
  // gradient buffers of non-leaf nodes are released once consumed.
  void Backward(Var loss, bool retain_intermediate_grads = false);

  std::size_t size() const { return nodes_.size(); }
  // Node ids in the order Backward() visited them.
  const std::vector<std::uint32_t>& backward_order() const { return visit_order_; }

 private:
  struct Node {
    Op op = Op::kLeaf;
    bool requires_grad = false;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::vector<std::uint32_t> parts;
    std::size_t begin = 0;
    std::size_t end = 0;
    Tensor value;
    Tensor grad;
    Tensor aux;  // dropout mask or softmax probabilities
    std::vector<std::size_t> index;  // labels or gathered rows
  };

  Var Push(Node node);
  Node& node(Var v);
  const Node& node(Var v) const;
  void Propagate(std::uint32_t id);
  Tensor& GradBuffer(std::uint32_t id);

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> visit_order_;
};

// Free-function forms of the primitives.
Tensor MatMul(const Tensor& a, const Tensor& b);
Tensor Tanh(const Tensor& x);
Tensor Sigmoid(const Tensor& x);

struct SoftmaxCrossEntropyResult {
  double loss = 0.0;
  Tensor probs;
};
SoftmaxCrossEntropyResult SoftmaxCrossEntropy(const Tensor& logits,
                                              std::span<const std::size_t> labels);

// A scalar function of theta recorded on a graph.
using TracedScalarFn = std::function<Var(Graph&, Var theta)>;

// Central finite differences against the reverse-mode gradient of f at theta.
// Returns max over coordinates of |fd - analytic| / max(1, |analytic|).
double GradCheck(const TracedScalarFn& f, const Tensor& theta, double h = 1e-5);

}  // namespace hdemg

#endif  // HDEMG_GRAPH_H_
