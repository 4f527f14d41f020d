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

#ifndef HDEMG_KERNELS_H_
#define HDEMG_KERNELS_H_

#include <cstddef>
#include <span>

// Dense numeric kernels used by the autodiff graph. Two implementations share
// one signature set:
//
//   kernels::serial  straightforward loops, kept as the reference for tests
//   kernels::omp     cache-blocked, OpenMP-parallel over output rows
//
// The OpenMP kernels never split a single output element across threads, so
// their results are bit-identical for any thread count.
namespace hdemg::kernels {

// Operand layout for C[m x n] = op(A) * op(B).
enum class Gemm {
  kNN,  // A is m x k, B is k x n
  kNT,  // A is m x k, B is n x k (B transposed)
  kTN,  // A is k x m (A transposed), B is k x n
};

namespace serial {

// C = op(A) op(B), or C += op(A) op(B) when accumulate is set.
void Gemm(Gemm layout, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);

void Tanh(std::span<const double> x, std::span<double> y);
void Sigmoid(std::span<const double> x, std::span<double> y);

// y += alpha * x
void Axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace serial

namespace omp {

void Gemm(Gemm layout, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);

void Tanh(std::span<const double> x, std::span<double> y);
void Sigmoid(std::span<const double> x, std::span<double> y);
void Axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace omp

// Numerically safe logistic function.
inline double Logistic(double x) {
  if (x >= 0) {
    const double e = __builtin_exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = __builtin_exp(x);
  return e / (1.0 + e);
}

}  // namespace hdemg::kernels

#endif  // HDEMG_KERNELS_H_
