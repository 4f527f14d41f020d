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


#include <omp.h>

#include <cmath>
#include <vector>

#include "doctest.h"
#include "hdemg/errors.h"
#include "hdemg/kernels.h"
#include "hdemg/tensor.h"
#include "oracles.h"

namespace hdemg {
namespace {

using kernels::Gemm;

// Long-double triple loop, independent of both kernel sets.
std::vector<double> NaiveGemm(Gemm layout, std::size_t m, std::size_t n, std::size_t k,
                              const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> c(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double acc = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = layout == Gemm::kTN ? a[p * m + i] : a[i * k + p];
        const double bv = layout == Gemm::kNT ? b[j * k + p] : b[p * n + j];
        acc += static_cast<long double>(av) * bv;
      }
      c[i * n + j] = static_cast<double>(acc);
    }
  return c;
}

std::vector<double> Random(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.Uniform(-1, 1);
  return v;
}

struct GemmCase {
  std::size_t m, n, k;
};

const GemmCase kCases[] = {{1, 1, 1},   {3, 5, 7},    {4, 16, 8},   {5, 17, 9},  {33, 31, 300},
                           {64, 128, 32}, {7, 64, 520}, {128, 96, 40}, {2, 130, 3}, {17, 1, 257}};

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("gemm kernels agree with a long-double reference for every layout") {
  Rng rng(11);
  for (Gemm layout : {Gemm::kNN, Gemm::kNT, Gemm::kTN}) {
    for (const auto& [m, n, k] : kCases) {
      CAPTURE(static_cast<int>(layout));
      CAPTURE(m);
      CAPTURE(n);
      CAPTURE(k);
      const auto a = Random(m * k, rng);
      const auto b = Random(k * n, rng);
      const auto want = NaiveGemm(layout, m, n, k, a, b);
      std::vector<double> cs(m * n, 42.0), co(m * n, 42.0);
      kernels::serial::Gemm(layout, m, n, k, a.data(), b.data(), cs.data(), false);
      kernels::omp::Gemm(layout, m, n, k, a.data(), b.data(), co.data(), false);
      const double tol = 1e-15 * static_cast<double>(k) + 1e-15;
      for (std::size_t i = 0; i < m * n; ++i) {
        REQUIRE(std::abs(cs[i] - want[i]) <= tol);
        REQUIRE(std::abs(co[i] - want[i]) <= tol);
      }
    }
  }
}

TEST_CASE("gemm accumulate adds onto the existing output") {
  Rng rng(12);
  for (Gemm layout : {Gemm::kNN, Gemm::kNT, Gemm::kTN}) {
    const std::size_t m = 9, n = 21, k = 270;
    const auto a = Random(m * k, rng);
    const auto b = Random(k * n, rng);
    const auto base = Random(m * n, rng);
    const auto prod = NaiveGemm(layout, m, n, k, a, b);
    auto cs = base, co = base;
    kernels::serial::Gemm(layout, m, n, k, a.data(), b.data(), cs.data(), true);
    kernels::omp::Gemm(layout, m, n, k, a.data(), b.data(), co.data(), true);
    for (std::size_t i = 0; i < m * n; ++i) {
      CHECK(std::abs(cs[i] - (base[i] + prod[i])) <= 1e-12);
      CHECK(std::abs(co[i] - (base[i] + prod[i])) <= 1e-12);
    }
  }
}

TEST_CASE("omp gemm is bit-identical across thread counts") {
  Rng rng(13);
  const int saved = omp_get_max_threads();
  for (Gemm layout : {Gemm::kNN, Gemm::kNT, Gemm::kTN}) {
    const std::size_t m = 130, n = 70, k = 600;
    const auto a = Random(m * k, rng);
    const auto b = Random(k * n, rng);
    std::vector<double> ref(m * n);
    omp_set_num_threads(1);
    kernels::omp::Gemm(layout, m, n, k, a.data(), b.data(), ref.data(), false);
    for (int threads : {2, 3, 4, 7}) {
      omp_set_num_threads(threads);
      std::vector<double> c(m * n);
      kernels::omp::Gemm(layout, m, n, k, a.data(), b.data(), c.data(), false);
      CHECK(c == ref);
    }
  }
  omp_set_num_threads(saved);
}

TEST_CASE("elementwise kernels") {
  Rng rng(14);
  const auto x = Random(1000, rng);
  std::vector<double> x_wide(x);
  for (double& v : x_wide) v *= 50.0;
  std::vector<double> ys(x.size()), yo(x.size());

  kernels::serial::Tanh(x_wide, ys);
  kernels::omp::Tanh(x_wide, yo);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(ys[i] == std::tanh(x_wide[i]));
    CHECK(yo[i] == doctest::Approx(std::tanh(x_wide[i])).epsilon(1e-15));
  }

  kernels::serial::Sigmoid(x_wide, ys);
  kernels::omp::Sigmoid(x_wide, yo);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double want = 1.0L / (1.0L + std::exp(-static_cast<long double>(x_wide[i])));
    CHECK(std::abs(ys[i] - static_cast<double>(want)) <= 1e-15);
    CHECK(std::abs(yo[i] - static_cast<double>(want)) <= 1e-15);
  }

  std::vector<double> as(x.size(), 1.0), ao(x.size(), 1.0);
  kernels::serial::Axpy(-0.5, x, as);
  kernels::omp::Axpy(-0.5, x, ao);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(as[i] == 1.0 - 0.5 * x[i]);
    CHECK(ao[i] == as[i]);
  }
}

TEST_CASE("logistic stays finite at the extremes") {
  CHECK(kernels::Logistic(1000.0) == 1.0);
  CHECK(kernels::Logistic(-1000.0) == 0.0);
  CHECK(kernels::Logistic(0.0) == 0.5);
  CHECK(std::isfinite(kernels::Logistic(-745.0)));
}

TEST_CASE("tensor basics") {
  const Tensor m = Tensor::Matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m.at(1, 2) == 6.0);
  CHECK(ShapeSize({2, 3, 4}) == 24);
  CHECK(m.Reshaped({3, 2}).at(2, 1) == 6.0);
  CHECK_THROWS_AS(m.Reshaped({4, 2}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(MaxAbsDiff(m, Tensor({3, 2})), DimensionError);
  CHECK(MaxAbsDiff(m, Tensor::Matrix({{1, 2, 3}, {4, 5, 6.5}})) == 0.5);
  Tensor f({2, 2}, 1.0);
  CHECK(f.AllFinite());
  f[3] = std::nan("");
  CHECK_FALSE(f.AllFinite());
}

}  // TEST_SUITE

}  // namespace hdemg
