/*
 * Copyright 2026 The enctrl Authors.
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

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "enctrl/errors.hpp"

namespace enctrl {

/// Dense row-major matrix. Used with Int residues, exact rationals and
/// doubles alike; ring-aware arithmetic lives next to each scalar type.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, const T& fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::initializer_list<std::initializer_list<T>> init) {
    rows_ = init.size();
    cols_ = rows_ == 0 ? 0 : init.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : init) {
      if (r.size() != cols_) throw ShapeMismatch("ragged matrix initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix column(std::vector<T> values) {
    Matrix m;
    m.rows_ = values.size();
    m.cols_ = 1;
    m.data_ = std::move(values);
    return m;
  }

  static Matrix row_vector(std::vector<T> values) {
    Matrix m;
    m.rows_ = 1;
    m.cols_ = values.size();
    m.data_ = std::move(values);
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  const std::vector<T>& values() const { return data_; }

  std::vector<T> column_values(std::size_t j) const {
    std::vector<T> out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
    return out;
  }

  template <typename F>
  auto map(F&& f) const -> Matrix<std::invoke_result_t<F, const T&>> {
    Matrix<std::invoke_result_t<F, const T&>> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = f(data_[i]);
    return out;
  }

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <typename T>
std::string shape_string(const Matrix<T>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

template <typename T, typename U>
void require_same_shape(const Matrix<T>& a, const Matrix<U>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeMismatch(std::string(what) + ": " + shape_string(a) + " vs " + shape_string(b));
  }
}

// Plain (non-modular) arithmetic for exact or floating scalar types.

template <typename T>
Matrix<T> operator*(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) throw ShapeMismatch("matrix product: " + shape_string(a) + " * " + shape_string(b));
  Matrix<T> out(a.rows(), b.cols(), T(0));
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k)
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) = out(i, j) + a(i, k) * b(k, j);
  return out;
}

template <typename T>
Matrix<T> operator+(const Matrix<T>& a, const Matrix<T>& b) {
  require_same_shape(a, b, "matrix sum");
  Matrix<T> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  return out;
}

template <typename T>
Matrix<T> operator-(const Matrix<T>& a, const Matrix<T>& b) {
  require_same_shape(a, b, "matrix difference");
  Matrix<T> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  return out;
}

template <typename T>
std::vector<T> operator*(const Matrix<T>& a, const std::vector<T>& x) {
  if (a.cols() != x.size()) throw ShapeMismatch("matrix-vector product: " + shape_string(a) + " * " + std::to_string(x.size()));
  std::vector<T> out(a.rows(), T(0));
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out[i] = out[i] + a(i, j) * x[j];
  return out;
}

template <typename T>
std::vector<T> operator+(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.size() != b.size()) throw ShapeMismatch("vector sum: length mismatch");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

}  // namespace enctrl
