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

#include <cmath>
#include <cstring>
#include <vector>

#include "hdemg/kernels.h"

namespace hdemg::kernels::omp {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = std::size_t{1} << 16;
constexpr std::size_t kParallelElems = std::size_t{1} << 15;

using Index = std::ptrdiff_t;

// Register tile: kMr rows of C by kNr columns accumulate in locals while p
// runs over one k-block. Every element of C sums its products in ascending p
// whatever the tiling or thread count.
constexpr std::size_t kMr = 4;
constexpr std::size_t kNr = 16;
constexpr std::size_t kKc = 256;

// A element (i, p) lives at a[i * ars + p * aps]; B is row-major k x n.
struct Operands {
  const double* a;
  std::size_t ars, aps;
  const double* b;
  std::size_t n;
  double* c;
};

// Eight doubles; lowered to whatever vector width the target offers.
typedef double V8 __attribute__((vector_size(64)));

inline V8 Load(const double* p) {
  V8 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void Store(double* p, V8 v) { std::memcpy(p, &v, sizeof v); }

inline void FullTile(const Operands& o, std::size_t i0, std::size_t j0, std::size_t p0,
                     std::size_t p1) {
  static_assert(kMr == 4 && kNr == 16);
  double* c0 = o.c + i0 * o.n + j0;
  double* c1 = c0 + o.n;
  double* c2 = c1 + o.n;
  double* c3 = c2 + o.n;
  V8 a0 = Load(c0), b0 = Load(c0 + 8);
  V8 a1 = Load(c1), b1 = Load(c1 + 8);
  V8 a2 = Load(c2), b2 = Load(c2 + 8);
  V8 a3 = Load(c3), b3 = Load(c3 + 8);
  const double* ap = o.a + i0 * o.ars;
  for (std::size_t p = p0; p < p1; ++p) {
    const double* brow = o.b + p * o.n + j0;
    const V8 lo = Load(brow), hi = Load(brow + 8);
    const double* ac = ap + p * o.aps;
    const double x0 = ac[0], x1 = ac[o.ars], x2 = ac[2 * o.ars], x3 = ac[3 * o.ars];
    a0 += x0 * lo;
    b0 += x0 * hi;
    a1 += x1 * lo;
    b1 += x1 * hi;
    a2 += x2 * lo;
    b2 += x2 * hi;
    a3 += x3 * lo;
    b3 += x3 * hi;
  }
  Store(c0, a0), Store(c0 + 8, b0);
  Store(c1, a1), Store(c1 + 8, b1);
  Store(c2, a2), Store(c2 + 8, b2);
  Store(c3, a3), Store(c3 + 8, b3);
}

// Ragged edges: same per-element order, no register blocking.
inline void EdgeTile(const Operands& o, std::size_t i0, std::size_t i1, std::size_t j0,
                     std::size_t j1, std::size_t p0, std::size_t p1) {
  for (std::size_t i = i0; i < i1; ++i) {
    double* __restrict crow = o.c + i * o.n;
    for (std::size_t p = p0; p < p1; ++p) {
      const double av = o.a[i * o.ars + p * o.aps];
      const double* __restrict brow = o.b + p * o.n;
      for (std::size_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
    }
  }
}

void BlockedGemm(const Operands& o, std::size_t m, std::size_t k, bool accumulate) {
  const std::size_t n = o.n;
  const bool par = m * n * k >= kParallelWork && m > kMr;
  const Index row_blocks = static_cast<Index>((m + kMr - 1) / kMr);
  const std::size_t n_full = n - n % kNr;
#pragma omp parallel if (par)
  {
    if (!accumulate) {
#pragma omp for schedule(static)
      for (Index ii = 0; ii < static_cast<Index>(m); ++ii) {
        std::memset(o.c + static_cast<std::size_t>(ii) * n, 0, n * sizeof(double));
      }
    }
    for (std::size_t p0 = 0; p0 < k; p0 += kKc) {
      const std::size_t p1 = p0 + kKc < k ? p0 + kKc : k;
#pragma omp for schedule(static)
      for (Index bi = 0; bi < row_blocks; ++bi) {
        const std::size_t i0 = static_cast<std::size_t>(bi) * kMr;
        const std::size_t i1 = i0 + kMr < m ? i0 + kMr : m;
        if (i1 - i0 == kMr) {
          for (std::size_t j0 = 0; j0 < n_full; j0 += kNr) FullTile(o, i0, j0, p0, p1);
        } else {
          EdgeTile(o, i0, i1, 0, n_full, p0, p1);
        }
        if (n_full < n) EdgeTile(o, i0, i1, n_full, n, p0, p1);
      }
    }
  }
}

// C (+)= A B with A m x k.
void GemmNN(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
            double* c, bool accumulate) {
  BlockedGemm({a, k, 1, b, n, c}, m, k, accumulate);
}

// C (+)= A^T B with A k x m.
void GemmTN(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
            double* c, bool accumulate) {
  BlockedGemm({a, 1, m, b, n, c}, m, k, accumulate);
}

}  // namespace

void Gemm(kernels::Gemm layout, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate) {
  switch (layout) {
    case kernels::Gemm::kNN:
      GemmNN(m, n, k, a, b, c, accumulate);
      return;
    case kernels::Gemm::kNT: {
      // Pack B^T (k x n) once; the packed copy is small next to the product.
      std::vector<double> bt(k * n);
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
      GemmNN(m, n, k, a, bt.data(), c, accumulate);
      return;
    }
    case kernels::Gemm::kTN:
      GemmTN(m, n, k, a, b, c, accumulate);
      return;
  }
}

void Tanh(std::span<const double> x, std::span<double> y) {
  const Index n = static_cast<Index>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelElems)
  for (Index i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void Sigmoid(std::span<const double> x, std::span<double> y) {
  const Index n = static_cast<Index>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelElems)
  for (Index i = 0; i < n; ++i) y[i] = Logistic(x[i]);
}

void Axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const Index n = static_cast<Index>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelElems)
  for (Index i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace hdemg::kernels::omp
