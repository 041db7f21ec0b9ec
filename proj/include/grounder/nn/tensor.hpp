//
// Copyright 2026 The Grounder Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef GROUNDER_NN_TENSOR_HPP
#define GROUNDER_NN_TENSOR_HPP

#include <Eigen/Dense>
#include <cassert>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "grounder/common.hpp"

namespace grounder {

// Dense row-major nd-array. Rank is dynamic but in practice 1..3
// (token matrices, feature maps, parameter blocks).
template <Real T>
class Tensor {
 public:
  using EigenMap =
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstEigenMap = Eigen::Map<
      const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    v_.assign(static_cast<std::size_t>(numel_of(shape_)), T(0));
  }
  Tensor(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), v_(std::move(data)) {
    assert(static_cast<std::size_t>(numel_of(shape_)) == v_.size());
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.v_.begin(), t.v_.end(), value);
    return t;
  }
  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  int numel() const { return numel_of(shape_); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }
  std::vector<T>& vec() { return v_; }
  const std::vector<T>& vec() const { return v_; }

  T& operator[](int i) { return v_[static_cast<std::size_t>(i)]; }
  T operator[](int i) const { return v_[static_cast<std::size_t>(i)]; }

  // 2D accessors.
  int rows() const { assert(ndim() == 2); return shape_[0]; }
  int cols() const { assert(ndim() == 2); return shape_[1]; }
  T& operator()(int r, int c) { return v_[static_cast<std::size_t>(r) * cols() + c]; }
  T operator()(int r, int c) const {
    return v_[static_cast<std::size_t>(r) * cols() + c];
  }

  // 3D accessor (channel, row, col).
  T& at3(int c, int h, int w) {
    assert(ndim() == 3);
    return v_[(static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w];
  }
  T at3(int c, int h, int w) const {
    assert(ndim() == 3);
    return v_[(static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w];
  }

  // Reinterprets the flat storage under a new shape with equal element count.
  Tensor reshaped(std::vector<int> shape) const {
    assert(numel_of(shape) == numel());
    return Tensor(std::move(shape), v_);
  }

  EigenMap mat() {
    assert(ndim() == 2);
    return EigenMap(v_.data(), shape_[0], shape_[1]);
  }
  ConstEigenMap mat() const {
    assert(ndim() == 2);
    return ConstEigenMap(v_.data(), shape_[0], shape_[1]);
  }

  void fill(T value) { std::fill(v_.begin(), v_.end(), value); }

  void add_inplace(const Tensor& o) {
    assert(same_shape(o));
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
  }

  bool all_finite() const {
    for (T x : v_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  template <Real U>
  Tensor<U> cast() const {
    std::vector<U> out(v_.size());
    for (std::size_t i = 0; i < v_.size(); ++i) out[i] = static_cast<U>(v_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

  static int numel_of(const std::vector<int>& shape) {
    if (shape.empty()) return 0;  // default-constructed tensor holds nothing
    int n = 1;
    for (int d : shape) n *= d;
    return n;
  }

 private:
  std::vector<int> shape_;
  std::vector<T> v_;
};

// C = A(MxK) * B(KxN), Eigen-backed.
template <Real T>
Tensor<T> matmul_nn(const Tensor<T>& a, const Tensor<T>& b) {
  assert(a.ndim() == 2 && b.ndim() == 2 && a.cols() == b.rows());
  Tensor<T> c({a.rows(), b.cols()});
  c.mat().noalias() = a.mat() * b.mat();
  return c;
}

// C = A(MxK) * B(NxK)^T.
template <Real T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  assert(a.ndim() == 2 && b.ndim() == 2 && a.cols() == b.cols());
  Tensor<T> c({a.rows(), b.rows()});
  c.mat().noalias() = a.mat() * b.mat().transpose();
  return c;
}

// C = A(KxM)^T * B(KxN).
template <Real T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  assert(a.ndim() == 2 && b.ndim() == 2 && a.rows() == b.rows());
  Tensor<T> c({a.cols(), b.cols()});
  c.mat().noalias() = a.mat().transpose() * b.mat();
  return c;
}

}  // namespace grounder

#endif  // GROUNDER_NN_TENSOR_HPP
