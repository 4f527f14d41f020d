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

// Serial reference kernels against their OpenMP counterparts on the shapes
// that dominate training: input projections (NT), recurrent products (NT)
// and weight gradients (TN).

#include <benchmark/benchmark.h>
#include <omp.h>

#include <vector>

#include "hdemg/kernels.h"
#include "hdemg/rng.h"

namespace {

std::vector<double> RandomVector(std::size_t n, std::uint64_t seed) {
  hdemg::Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.Uniform(-1.0, 1.0);
  return v;
}

template <bool kParallel>
void BM_Gemm(benchmark::State& state) {
  const auto layout = static_cast<hdemg::kernels::Gemm>(state.range(0));
  const std::size_t m = static_cast<std::size_t>(state.range(1));
  const std::size_t n = static_cast<std::size_t>(state.range(2));
  const std::size_t k = static_cast<std::size_t>(state.range(3));
  const auto a = RandomVector(m * k, 1);
  const auto b = RandomVector(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    if constexpr (kParallel) {
      hdemg::kernels::omp::Gemm(layout, m, n, k, a.data(), b.data(), c.data(), false);
    } else {
      hdemg::kernels::serial::Gemm(layout, m, n, k, a.data(), b.data(), c.data(), false);
    }
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.counters["threads"] = kParallel ? omp_get_max_threads() : 1;
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * n * k));
}

template <bool kParallel>
void BM_Tanh(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const auto x = RandomVector(n, 3);
  std::vector<double> y(n);
  for (auto _ : state) {
    if constexpr (kParallel) {
      hdemg::kernels::omp::Tanh(x, y);
    } else {
      hdemg::kernels::serial::Tanh(x, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

// (layout, m, n, k): batch 64 x 409 steps of 128 channels into 4H = 128,
// one recurrent step, and the input-weight gradient.
void GemmShapes(benchmark::internal::Benchmark* b) {
  const auto nt = static_cast<std::int64_t>(hdemg::kernels::Gemm::kNT);
  const auto tn = static_cast<std::int64_t>(hdemg::kernels::Gemm::kTN);
  const auto nn = static_cast<std::int64_t>(hdemg::kernels::Gemm::kNN);
  b->Args({nt, 64 * 409, 128, 128});
  b->Args({nt, 64, 128, 32});
  b->Args({tn, 128, 128, 64 * 409});
  b->Args({nn, 512, 512, 512});
}

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Apply(GemmShapes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Gemm<true>)->Name("gemm/omp")->Apply(GemmShapes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Tanh<false>)->Name("tanh/serial")->Arg(1 << 20)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Tanh<true>)->Name("tanh/omp")->Arg(1 << 20)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
