// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

#include "protodx/errors.hpp"
#include "protodx/kernels.hpp"

namespace protodx {

// Dense row-major matrix with value semantics.
template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  T operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }
  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, T{});
  }

  template <class U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

// out(m x n) += a(m x k) * b(n x k)^T
template <class T>
void gemm_nt(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  if (a.cols() != b.cols() || out.rows() != a.rows() || out.cols() != b.rows()) {
    throw ContractError("gemm_nt: shape mismatch");
  }
  const auto& k = simd::active_kernels<T>();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const T* ai = a.row(i).data();
    T* oi = out.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) oi[j] += k.dot(ai, b.row(j).data(), a.cols());
  }
}

// out(m x n) += a(m x k) * b(k x n)
template <class T>
void gemm_nn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  if (a.cols() != b.rows() || out.rows() != a.rows() || out.cols() != b.cols()) {
    throw ContractError("gemm_nn: shape mismatch");
  }
  const auto& k = simd::active_kernels<T>();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T* oi = out.row(i).data();
    for (std::size_t l = 0; l < a.cols(); ++l) {
      const T s = a(i, l);
      if (s != T{0}) k.axpy(s, b.row(l).data(), oi, b.cols());
    }
  }
}

// out(m x n) += a(k x m)^T * b(k x n)
template <class T>
void gemm_tn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) {
    throw ContractError("gemm_tn: shape mismatch");
  }
  const auto& k = simd::active_kernels<T>();
  for (std::size_t l = 0; l < a.rows(); ++l) {
    const T* bl = b.row(l).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const T s = a(l, i);
      if (s != T{0}) k.axpy(s, bl, out.row(i).data(), b.cols());
    }
  }
}

template <class T>
void add_inplace(Matrix<T>& dst, const Matrix<T>& src) {
  assert(dst.size() == src.size());
  simd::active_kernels<T>().axpy(T{1}, src.data(), dst.data(), dst.size());
}

}  // namespace protodx
