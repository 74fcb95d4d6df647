// Copyright 2026 The mbrec Authors.
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

#pragma once

// Dense and compressed-sparse-row matrix types.
//
// Summation order contract: every kernel here accumulates left to right over
// the stored entries of a row (ascending column index), starting from an
// exact zero. Oracles that want bitwise agreement must follow the same order.

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "mbrec/errors.hpp"

namespace mbrec {

using Index = std::int64_t;

template <typename Scalar>
using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Matrix = Dense<double>;

inline std::string shape_string(Index rows, Index cols) {
  std::ostringstream os;
  os << rows << "x" << cols;
  return os.str();
}

template <typename Derived>
std::string shape_string(const Eigen::MatrixBase<Derived>& m) {
  return shape_string(m.rows(), m.cols());
}

template <typename Scalar>
struct Triplet {
  Index row;
  Index col;
  Scalar value;
};

template <typename Scalar>
class CsrMatrix {
 public:
  CsrMatrix() = default;

  CsrMatrix(Index rows, Index cols) : rows_(rows), cols_(cols), offsets_(rows + 1, 0) {}

  /// Takes ownership of raw CSR arrays and validates the layout invariants.
  CsrMatrix(Index rows, Index cols, std::vector<Index> offsets, std::vector<Index> indices,
            std::vector<Scalar> values)
      : rows_(rows),
        cols_(cols),
        offsets_(std::move(offsets)),
        indices_(std::move(indices)),
        values_(std::move(values)) {
    validate();
  }

  /// Builds from unordered triplets. Duplicate coordinates are summed, and
  /// entries that end up exactly zero are dropped.
  static CsrMatrix from_triplets(Index rows, Index cols, std::vector<Triplet<Scalar>> entries) {
    std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    std::vector<Index> offsets(rows + 1, 0);
    std::vector<Index> indices;
    std::vector<Scalar> values;
    indices.reserve(entries.size());
    values.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size();) {
      const auto& e = entries[i];
      if (e.row < 0 || e.row >= rows || e.col < 0 || e.col >= cols) {
        throw ConfigError("triplet (" + std::to_string(e.row) + ", " + std::to_string(e.col) +
                          ") outside " + shape_string(rows, cols));
      }
      Scalar sum = Scalar(0);
      std::size_t j = i;
      for (; j < entries.size() && entries[j].row == e.row && entries[j].col == e.col; ++j) {
        sum += entries[j].value;
      }
      if (sum != Scalar(0)) {
        indices.push_back(e.col);
        values.push_back(sum);
        ++offsets[e.row + 1];
      }
      i = j;
    }
    for (Index r = 0; r < rows; ++r) offsets[r + 1] += offsets[r];
    return CsrMatrix(rows, cols, std::move(offsets), std::move(indices), std::move(values));
  }

  template <typename Derived>
  static CsrMatrix from_dense(const Eigen::MatrixBase<Derived>& m) {
    std::vector<Triplet<Scalar>> entries;
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) {
        if (m(r, c) != Scalar(0)) entries.push_back({r, c, m(r, c)});
      }
    }
    return from_triplets(m.rows(), m.cols(), std::move(entries));
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index nnz() const { return static_cast<Index>(values_.size()); }

  std::span<const Index> offsets() const { return offsets_; }
  std::span<const Index> indices() const { return indices_; }
  std::span<const Scalar> values() const { return values_; }

  std::span<const Index> row_indices(Index r) const {
    return std::span<const Index>(indices_).subspan(offsets_[r], offsets_[r + 1] - offsets_[r]);
  }
  std::span<const Scalar> row_values(Index r) const {
    return std::span<const Scalar>(values_).subspan(offsets_[r], offsets_[r + 1] - offsets_[r]);
  }

  Dense<Scalar> densify() const {
    Dense<Scalar> out = Dense<Scalar>::Zero(rows_, cols_);
    for (Index r = 0; r < rows_; ++r) {
      for (Index p = offsets_[r]; p < offsets_[r + 1]; ++p) out(r, indices_[p]) = values_[p];
    }
    return out;
  }

  /// Sum of stored values in row r, accumulated in storage order.
  Scalar row_sum(Index r) const {
    Scalar s = Scalar(0);
    for (Index p = offsets_[r]; p < offsets_[r + 1]; ++p) s += values_[p];
    return s;
  }

  /// Returns the matrix with every row r scaled by factors[r].
  CsrMatrix scale_rows(std::span<const Scalar> factors) const {
    CsrMatrix out = *this;
    for (Index r = 0; r < rows_; ++r) {
      for (Index p = offsets_[r]; p < offsets_[r + 1]; ++p) out.values_[p] *= factors[r];
    }
    out.drop_zeros();
    return out;
  }

 private:
  void validate() const {
    if (rows_ < 0 || cols_ < 0) throw ConfigError("negative CSR shape " + shape_string(rows_, cols_));
    if (static_cast<Index>(offsets_.size()) != rows_ + 1 || offsets_.front() != 0 ||
        offsets_.back() != static_cast<Index>(indices_.size()) || indices_.size() != values_.size()) {
      throw ConfigError("inconsistent CSR arrays for " + shape_string(rows_, cols_));
    }
    for (Index r = 0; r < rows_; ++r) {
      if (offsets_[r + 1] < offsets_[r]) throw ConfigError("CSR offsets decrease at row " + std::to_string(r));
      for (Index p = offsets_[r]; p < offsets_[r + 1]; ++p) {
        if (indices_[p] < 0 || indices_[p] >= cols_) throw ConfigError("CSR column index out of range");
        if (p > offsets_[r] && indices_[p] <= indices_[p - 1]) {
          throw ConfigError("CSR column indices not strictly increasing in row " + std::to_string(r));
        }
        if (values_[p] == Scalar(0)) throw ConfigError("CSR stores an explicit zero");
      }
    }
  }

  void drop_zeros() {
    std::vector<Index> offsets(rows_ + 1, 0);
    std::vector<Index> indices;
    std::vector<Scalar> values;
    for (Index r = 0; r < rows_; ++r) {
      for (Index p = offsets_[r]; p < offsets_[r + 1]; ++p) {
        if (values_[p] == Scalar(0)) continue;
        indices.push_back(indices_[p]);
        values.push_back(values_[p]);
      }
      offsets[r + 1] = static_cast<Index>(indices.size());
    }
    offsets_ = std::move(offsets);
    indices_ = std::move(indices);
    values_ = std::move(values);
  }

  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Index> offsets_{0};
  std::vector<Index> indices_;
  std::vector<Scalar> values_;
};

using SparseMatrix = CsrMatrix<double>;

/// out = a * b. Each output entry is accumulated over the row's stored entries
/// in ascending column order.
template <typename Scalar, typename Derived>
Dense<Scalar> spmm(const CsrMatrix<Scalar>& a, const Eigen::MatrixBase<Derived>& b) {
  if (a.cols() != b.rows()) {
    throw ConfigError("spmm dimension mismatch: sparse " + shape_string(a.rows(), a.cols()) +
                      " times dense " + shape_string(b));
  }
  const Index width = b.cols();
  Dense<Scalar> out = Dense<Scalar>::Zero(a.rows(), width);
  const auto offsets = a.offsets();
  const auto indices = a.indices();
  const auto values = a.values();
  for (Index r = 0; r < a.rows(); ++r) {
    Scalar* dst = out.row(r).data();
    for (Index p = offsets[r]; p < offsets[r + 1]; ++p) {
      const Scalar w = values[p];
      const Index src_row = indices[p];
      for (Index c = 0; c < width; ++c) dst[c] += w * b(src_row, c);
    }
  }
  return out;
}

/// out = a^T * g without materializing the transpose.
template <typename Scalar, typename Derived>
Dense<Scalar> spmm_transposed(const CsrMatrix<Scalar>& a, const Eigen::MatrixBase<Derived>& g) {
  if (a.rows() != g.rows()) {
    throw ConfigError("spmm_transposed dimension mismatch: sparse " + shape_string(a.rows(), a.cols()) +
                      " (transposed) times dense " + shape_string(g));
  }
  const Index width = g.cols();
  Dense<Scalar> out = Dense<Scalar>::Zero(a.cols(), width);
  const auto offsets = a.offsets();
  const auto indices = a.indices();
  const auto values = a.values();
  for (Index r = 0; r < a.rows(); ++r) {
    for (Index p = offsets[r]; p < offsets[r + 1]; ++p) {
      const Scalar w = values[p];
      Scalar* dst = out.row(indices[p]).data();
      for (Index c = 0; c < width; ++c) dst[c] += w * g(r, c);
    }
  }
  return out;
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace mbrec
