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

#ifndef HDEMG_TENSOR_H_
#define HDEMG_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hdemg {

using Shape = std::vector<std::size_t>;

std::size_t ShapeSize(const Shape& shape);
std::string ShapeString(const Shape& shape);

// Dense row-major array of doubles with shape metadata. Every extent is
// positive and size() == product(shape).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  // 2-D literal, e.g. Tensor::Matrix({{1, 2}, {3, 4}}).
  static Tensor Matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor Vector(std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rows/cols of a rank-2 tensor.
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  // Same data, new shape of equal total size.
  Tensor Reshaped(Shape shape) const;
  void Fill(double v);
  bool AllFinite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Universal carrier for signal data (T x C repetitions, N x W x C windows).
using SignalTensor = Tensor;

// Largest elementwise absolute difference; throws DimensionError on shape
// mismatch.
double MaxAbsDiff(const Tensor& a, const Tensor& b);

}  // namespace hdemg

#endif  // HDEMG_TENSOR_H_
