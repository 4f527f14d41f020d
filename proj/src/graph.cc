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

#include "hdemg/graph.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "hdemg/errors.h"
#include "hdemg/kernels.h"

namespace hdemg {

namespace k = kernels;

namespace {

void RequireRank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + " expects a rank-2 operand, got " +
                         ShapeString(t.shape()));
  }
}

void RequireSameShape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + ShapeString(a.shape()) +
                         " vs " + ShapeString(b.shape()));
  }
}

void AddInto(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

Var Graph::Push(Node n) {
  if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max()) {
    throw ContractError("graph node limit exceeded");
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Graph::Node& Graph::node(Var v) {
  if (v.id >= nodes_.size()) throw IndexError("unknown graph variable");
  return nodes_[v.id];
}

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw IndexError("unknown graph variable");
  return nodes_[v.id];
}

Var Graph::Constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return Push(std::move(n));
}

Var Graph::Parameter(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return Push(std::move(n));
}

Var Graph::MatMul(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  RequireRank2(av, "matmul");
  RequireRank2(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul inner extents differ: " + ShapeString(av.shape()) + " x " +
                         ShapeString(bv.shape()));
  }
  Node n;
  n.op = Op::kMatMul;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  n.value = Tensor({av.rows(), bv.cols()});
  k::omp::Gemm(k::Gemm::kNN, av.rows(), bv.cols(), av.cols(), av.data(), bv.data(),
               n.value.data(), false);
  return Push(std::move(n));
}

Var Graph::MatMulT(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  RequireRank2(av, "matmul");
  RequireRank2(bv, "matmul");
  if (av.cols() != bv.cols()) {
    throw DimensionError("matmul inner extents differ: " + ShapeString(av.shape()) +
                         " x transpose " + ShapeString(bv.shape()));
  }
  Node n;
  n.op = Op::kMatMulT;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  n.value = Tensor({av.rows(), bv.rows()});
  k::omp::Gemm(k::Gemm::kNT, av.rows(), bv.rows(), av.cols(), av.data(), bv.data(),
               n.value.data(), false);
  return Push(std::move(n));
}

Var Graph::Add(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  RequireSameShape(av, bv, "add");
  Node n;
  n.op = Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  n.value = av;
  AddInto(n.value.values(), bv.values());
  return Push(std::move(n));
}

Var Graph::AddRow(Var a, Var row) {
  const Tensor& av = node(a).value;
  const Tensor& rv = node(row).value;
  RequireRank2(av, "add_row");
  if (rv.size() != av.cols()) {
    throw DimensionError("add_row: row of " + std::to_string(rv.size()) +
                         " elements against " + ShapeString(av.shape()));
  }
  Node n;
  n.op = Op::kAddRow;
  n.a = a.id;
  n.b = row.id;
  n.requires_grad = node(a).requires_grad || node(row).requires_grad;
  n.value = av;
  const std::size_t cols = av.cols();
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double* dst = n.value.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) dst[c] += rv[c];
  }
  return Push(std::move(n));
}

Var Graph::Mul(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  RequireSameShape(av, bv, "mul");
  Node n;
  n.op = Op::kMul;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  n.value = av;
  for (std::size_t i = 0; i < bv.size(); ++i) n.value[i] *= bv[i];
  return Push(std::move(n));
}

Var Graph::Tanh(Var a) {
  const Tensor& av = node(a).value;
  Node n;
  n.op = Op::kTanh;
  n.a = a.id;
  n.requires_grad = node(a).requires_grad;
  n.value = Tensor(av.shape());
  k::omp::Tanh(av.values(), n.value.values());
  return Push(std::move(n));
}

Var Graph::Sigmoid(Var a) {
  const Tensor& av = node(a).value;
  Node n;
  n.op = Op::kSigmoid;
  n.a = a.id;
  n.requires_grad = node(a).requires_grad;
  n.value = Tensor(av.shape());
  k::omp::Sigmoid(av.values(), n.value.values());
  return Push(std::move(n));
}

Var Graph::SliceRows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = node(a).value;
  RequireRank2(av, "slice_rows");
  if (begin >= end || end > av.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + ShapeString(av.shape()));
  }
  Node n;
  n.op = Op::kSliceRows;
  n.a = a.id;
  n.begin = begin;
  n.end = end;
  n.requires_grad = node(a).requires_grad;
  const std::size_t cols = av.cols();
  n.value = Tensor({end - begin, cols},
                   std::vector<double>(av.data() + begin * cols, av.data() + end * cols));
  return Push(std::move(n));
}

Var Graph::SliceCols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = node(a).value;
  RequireRank2(av, "slice_cols");
  if (begin >= end || end > av.cols()) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + ShapeString(av.shape()));
  }
  Node n;
  n.op = Op::kSliceCols;
  n.a = a.id;
  n.begin = begin;
  n.end = end;
  n.requires_grad = node(a).requires_grad;
  const std::size_t rows = av.rows(), cols = av.cols(), w = end - begin;
  n.value = Tensor({rows, w});
  for (std::size_t r = 0; r < rows; ++r) {
    std::memcpy(n.value.data() + r * w, av.data() + r * cols + begin, w * sizeof(double));
  }
  return Push(std::move(n));
}

Var Graph::ConcatRows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  const std::size_t cols = node(parts[0]).value.cols();
  std::size_t rows = 0;
  Node n;
  n.op = Op::kConcatRows;
  for (Var p : parts) {
    const Tensor& pv = node(p).value;
    RequireRank2(pv, "concat_rows");
    if (pv.cols() != cols) throw DimensionError("concat_rows: column counts differ");
    rows += pv.rows();
    n.requires_grad = n.requires_grad || node(p).requires_grad;
    n.parts.push_back(p.id);
  }
  n.value = Tensor({rows, cols});
  double* dst = n.value.data();
  for (Var p : parts) {
    const Tensor& pv = node(p).value;
    std::memcpy(dst, pv.data(), pv.size() * sizeof(double));
    dst += pv.size();
  }
  return Push(std::move(n));
}

Var Graph::ConcatCols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols of nothing");
  const std::size_t rows = node(parts[0]).value.rows();
  std::size_t cols = 0;
  Node n;
  n.op = Op::kConcatCols;
  for (Var p : parts) {
    const Tensor& pv = node(p).value;
    RequireRank2(pv, "concat_cols");
    if (pv.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += pv.cols();
    n.requires_grad = n.requires_grad || node(p).requires_grad;
    n.parts.push_back(p.id);
  }
  n.value = Tensor({rows, cols});
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& pv = node(p).value;
    const std::size_t w = pv.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      std::memcpy(n.value.data() + r * cols + offset, pv.data() + r * w, w * sizeof(double));
    }
    offset += w;
  }
  return Push(std::move(n));
}

Var Graph::Dropout(Var a, Tensor mask) {
  const Tensor& av = node(a).value;
  RequireSameShape(av, mask, "dropout");
  Node n;
  n.op = Op::kDropout;
  n.a = a.id;
  n.requires_grad = node(a).requires_grad;
  n.value = av;
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] *= mask[i];
  n.aux = std::move(mask);
  return Push(std::move(n));
}

Var Graph::GatherRows(Var table, std::vector<std::size_t> rows) {
  const Tensor& tv = node(table).value;
  RequireRank2(tv, "gather_rows");
  if (rows.empty()) throw ContractError("gather_rows with no indices");
  const std::size_t cols = tv.cols();
  Node n;
  n.op = Op::kGatherRows;
  n.a = table.id;
  n.requires_grad = node(table).requires_grad;
  n.value = Tensor({rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= tv.rows()) {
      throw IndexError("row " + std::to_string(rows[i]) + " outside table of " +
                       std::to_string(tv.rows()) + " rows");
    }
    std::memcpy(n.value.data() + i * cols, tv.data() + rows[i] * cols, cols * sizeof(double));
  }
  n.index = std::move(rows);
  return Push(std::move(n));
}

Var Graph::Sum(Var a) {
  const Tensor& av = node(a).value;
  Node n;
  n.op = Op::kSum;
  n.a = a.id;
  n.requires_grad = node(a).requires_grad;
  double s = 0.0;
  for (double v : av.values()) s += v;
  n.value = Tensor({1}, s);
  return Push(std::move(n));
}

Var Graph::SoftmaxCrossEntropy(Var logits, std::vector<std::size_t> labels) {
  const Tensor& lv = node(logits).value;
  auto [loss, probs] = hdemg::SoftmaxCrossEntropy(lv, labels);
  Node n;
  n.op = Op::kSoftmaxCrossEntropy;
  n.a = logits.id;
  n.requires_grad = node(logits).requires_grad;
  n.value = Tensor({1}, loss);
  n.aux = std::move(probs);
  n.index = std::move(labels);
  return Push(std::move(n));
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

const Tensor& Graph::Probabilities(Var v) const {
  const Node& n = node(v);
  if (n.op != Op::kSoftmaxCrossEntropy) throw ContractError("not a softmax cross-entropy node");
  return n.aux;
}

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

Graph::Op Graph::op(Var v) const { return node(v).op; }

Tensor Graph::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

bool Graph::has_grad(Var v) const { return !node(v).grad.empty(); }

Tensor& Graph::GradBuffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Graph::Backward(Var loss, bool retain_intermediate_grads) {
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    throw ContractError("backward requires a scalar loss, got " +
                        ShapeString(root.value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  visit_order_.clear();
  if (!root.requires_grad) return;
  GradBuffer(loss.id)[0] = 1.0;
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    visit_order_.push_back(id);
    if (!n.requires_grad || n.grad.empty() || n.op == Op::kLeaf) continue;
    Propagate(id);
    if (!retain_intermediate_grads) n.grad = Tensor();
  }
}

void Graph::Propagate(std::uint32_t id) {
  // References into nodes_ stay valid: no nodes are added during the sweep.
  Node& n = nodes_[id];
  const Tensor& g = n.grad;
  auto wants = [&](std::uint32_t input) { return nodes_[input].requires_grad; };

  switch (n.op) {
    case Op::kLeaf:
      return;
    case Op::kMatMul: {
      // C = A B: dA += dC B^T, dB += A^T dC
      const Tensor& a = nodes_[n.a].value;
      const Tensor& b = nodes_[n.b].value;
      const std::size_t m = a.rows(), kk = a.cols(), nn = b.cols();
      if (wants(n.a)) {
        const bool acc = !nodes_[n.a].grad.empty();
        Tensor& ga = GradBuffer(n.a);
        k::omp::Gemm(k::Gemm::kNT, m, kk, nn, g.data(), b.data(), ga.data(), acc);
      }
      if (wants(n.b)) {
        const bool acc = !nodes_[n.b].grad.empty();
        Tensor& gb = GradBuffer(n.b);
        k::omp::Gemm(k::Gemm::kTN, kk, nn, m, a.data(), g.data(), gb.data(), acc);
      }
      return;
    }
    case Op::kMatMulT: {
      // C = A B^T: dA += dC B, dB += dC^T A
      const Tensor& a = nodes_[n.a].value;
      const Tensor& b = nodes_[n.b].value;
      const std::size_t m = a.rows(), kk = a.cols(), nn = b.rows();
      if (wants(n.a)) {
        const bool acc = !nodes_[n.a].grad.empty();
        Tensor& ga = GradBuffer(n.a);
        k::omp::Gemm(k::Gemm::kNN, m, kk, nn, g.data(), b.data(), ga.data(), acc);
      }
      if (wants(n.b)) {
        const bool acc = !nodes_[n.b].grad.empty();
        Tensor& gb = GradBuffer(n.b);
        k::omp::Gemm(k::Gemm::kTN, nn, kk, m, g.data(), a.data(), gb.data(), acc);
      }
      return;
    }
    case Op::kAdd:
      if (wants(n.a)) AddInto(GradBuffer(n.a).values(), g.values());
      if (wants(n.b)) AddInto(GradBuffer(n.b).values(), g.values());
      return;
    case Op::kAddRow: {
      if (wants(n.a)) AddInto(GradBuffer(n.a).values(), g.values());
      if (wants(n.b)) {
        Tensor& gr = GradBuffer(n.b);
        const std::size_t rows = g.rows(), cols = g.cols();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* src = g.data() + r * cols;
          for (std::size_t c = 0; c < cols; ++c) gr[c] += src[c];
        }
      }
      return;
    }
    case Op::kMul: {
      const Tensor& a = nodes_[n.a].value;
      const Tensor& b = nodes_[n.b].value;
      if (wants(n.a)) {
        Tensor& ga = GradBuffer(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (wants(n.b)) {
        Tensor& gb = GradBuffer(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
      return;
    }
    case Op::kTanh: {
      Tensor& ga = GradBuffer(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = n.value[i];
        ga[i] += g[i] * (1.0 - y * y);
      }
      return;
    }
    case Op::kSigmoid: {
      Tensor& ga = GradBuffer(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = n.value[i];
        ga[i] += g[i] * y * (1.0 - y);
      }
      return;
    }
    case Op::kSliceRows: {
      Tensor& ga = GradBuffer(n.a);
      const std::size_t cols = ga.cols();
      AddInto(std::span<double>(ga.data() + n.begin * cols, g.size()), g.values());
      return;
    }
    case Op::kSliceCols: {
      Tensor& ga = GradBuffer(n.a);
      const std::size_t cols = ga.cols(), w = n.end - n.begin;
      for (std::size_t r = 0; r < g.rows(); ++r) {
        AddInto(std::span<double>(ga.data() + r * cols + n.begin, w),
                std::span<const double>(g.data() + r * w, w));
      }
      return;
    }
    case Op::kConcatRows: {
      const double* src = g.data();
      for (std::uint32_t p : n.parts) {
        const std::size_t sz = nodes_[p].value.size();
        if (wants(p)) AddInto(GradBuffer(p).values(), std::span<const double>(src, sz));
        src += sz;
      }
      return;
    }
    case Op::kConcatCols: {
      const std::size_t cols = g.cols();
      std::size_t offset = 0;
      for (std::uint32_t p : n.parts) {
        const std::size_t w = nodes_[p].value.cols();
        if (wants(p)) {
          Tensor& gp = GradBuffer(p);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            AddInto(std::span<double>(gp.data() + r * w, w),
                    std::span<const double>(g.data() + r * cols + offset, w));
          }
        }
        offset += w;
      }
      return;
    }
    case Op::kDropout: {
      Tensor& ga = GradBuffer(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.aux[i];
      return;
    }
    case Op::kGatherRows: {
      Tensor& gt = GradBuffer(n.a);
      const std::size_t cols = gt.cols();
      for (std::size_t i = 0; i < n.index.size(); ++i) {
        AddInto(std::span<double>(gt.data() + n.index[i] * cols, cols),
                std::span<const double>(g.data() + i * cols, cols));
      }
      return;
    }
    case Op::kSum: {
      Tensor& ga = GradBuffer(n.a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
      return;
    }
    case Op::kSoftmaxCrossEntropy: {
      // Fused gradient: (probs - onehot) / batch.
      Tensor& gl = GradBuffer(n.a);
      const std::size_t batch = n.aux.rows(), classes = n.aux.cols();
      const double scale = g[0] / static_cast<double>(batch);
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t c = 0; c < classes; ++c) {
          const double onehot = c == n.index[r] ? 1.0 : 0.0;
          gl.at(r, c) += scale * (n.aux.at(r, c) - onehot);
        }
      }
      return;
    }
  }
}

Tensor MatMul(const Tensor& a, const Tensor& b) {
  RequireRank2(a, "matmul");
  RequireRank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul inner extents differ: " + ShapeString(a.shape()) + " x " +
                         ShapeString(b.shape()));
  }
  Tensor c({a.rows(), b.cols()});
  k::omp::Gemm(k::Gemm::kNN, a.rows(), b.cols(), a.cols(), a.data(), b.data(), c.data(), false);
  return c;
}

Tensor Tanh(const Tensor& x) {
  Tensor y(x.shape());
  k::omp::Tanh(x.values(), y.values());
  return y;
}

Tensor Sigmoid(const Tensor& x) {
  Tensor y(x.shape());
  k::omp::Sigmoid(x.values(), y.values());
  return y;
}

SoftmaxCrossEntropyResult SoftmaxCrossEntropy(const Tensor& logits,
                                              std::span<const std::size_t> labels) {
  RequireRank2(logits, "softmax_cross_entropy");
  const std::size_t batch = logits.rows(), classes = logits.cols();
  if (labels.size() != batch) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(batch) + " rows");
  }
  SoftmaxCrossEntropyResult out;
  out.probs = Tensor(logits.shape());
  double total = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    if (labels[r] >= classes) {
      throw IndexError("label " + std::to_string(labels[r]) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    const double* row = logits.data() + r * classes;
    double* p = out.probs.data() + r * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      p[c] = std::exp(row[c] - mx);
      z += p[c];
    }
    for (std::size_t c = 0; c < classes; ++c) p[c] /= z;
    // log-sum-exp form keeps the loss exact where p[label] underflows.
    total += std::log(z) - (row[labels[r]] - mx);
  }
  out.loss = total / static_cast<double>(batch);
  return out;
}

double GradCheck(const TracedScalarFn& f, const Tensor& theta, double h) {
  Tensor analytic;
  {
    Graph g;
    Var t = g.Parameter(theta, true);
    Var loss = f(g, t);
    g.Backward(loss);
    analytic = g.grad(t);
  }
  auto eval = [&](const Tensor& at) {
    Graph g;
    Var t = g.Parameter(at, true);
    return g.value(f(g, t))[0];
  };
  double worst = 0.0;
  Tensor probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = eval(probe);
    probe[i] = orig - h;
    const double down = eval(probe);
    probe[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double err = std::abs(fd - analytic[i]) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace hdemg
