// Copyright (c) 2026 The gfnfair Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gfn/error.hpp"

namespace gfn {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double Dot(std::span<const double> a, std::span<const double> b) {
  Require(a.size() == b.size(), ErrorKind::kInputShape,
          "dot: length mismatch " + std::to_string(a.size()) + " vs " +
              std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double Norm(std::span<const double> a) { return std::sqrt(Dot(a, a)); }

// Returns a / |a|. Throws on a zero vector.
inline Vector Normalized(std::span<const double> a) {
  const double n = Norm(a);
  Require(n > 0.0 && std::isfinite(n), ErrorKind::kDegenerate,
          "cannot normalize a zero or non-finite vector");
  Vector out(a.begin(), a.end());
  for (double& x : out) x /= n;
  return out;
}

inline double CosineSimilarity(std::span<const double> a, std::span<const double> b) {
  Require(a.size() == b.size(), ErrorKind::kInputShape,
          "cosine_similarity: length mismatch");
  const double na = Norm(a);
  const double nb = Norm(b);
  Require(na > 0.0 && nb > 0.0, ErrorKind::kDegenerate,
          "cosine_similarity: zero-norm vector");
  return Dot(a, b) / (na * nb);
}

// y = W x + b
inline void Affine(const Matrix& w, std::span<const double> x,
                   std::span<const double> b, std::span<double> y) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    auto row = w.row(r);
    double s = b[r];
    for (std::size_t c = 0; c < w.cols(); ++c) s += row[c] * x[c];
    y[r] = s;
  }
}

inline bool AllFinite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace gfn
