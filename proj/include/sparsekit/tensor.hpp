// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

// Dense and CSR matrix types shared by every other part of the toolkit,
// plus the dense reference products used as correctness oracles.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "sparsekit/error.hpp"

namespace sparsekit {

/// Index type used for CSR row pointers and column indices.
using Index = std::int32_t;

template <typename Scalar>
using DenseT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row-major 32-bit float matrix. Holds the dense operand B and outputs C.
using DenseMatrix = DenseT<float>;
using DenseMap = Eigen::Map<DenseMatrix>;
using ConstDenseMap = Eigen::Map<const DenseMatrix>;

/// Accumulator type for the oracle: strictly wider than the stored scalar.
template <typename Scalar>
using OracleAccumT = std::conditional_t<std::is_same_v<Scalar, float>, double, long double>;

/// Compressed sparse row matrix. Construction validates every structural
/// invariant; explicit stored zeros are rejected.
template <typename Scalar>
class BasicCsrMatrix {
 public:
  using value_type = Scalar;

  BasicCsrMatrix() : row_ptr_{0} {}

  BasicCsrMatrix(Index rows, Index cols, std::vector<Index> row_ptr,
                 std::vector<Index> col_idx, std::vector<Scalar> values)
      : rows_(rows),
        cols_(cols),
        row_ptr_(std::move(row_ptr)),
        col_idx_(std::move(col_idx)),
        values_(std::move(values)) {
    validate();
  }

  static BasicCsrMatrix identity(Index n) {
    std::vector<Index> ptr(static_cast<std::size_t>(n) + 1);
    std::vector<Index> idx(static_cast<std::size_t>(n));
    for (Index i = 0; i <= n; ++i) ptr[i] = i;
    for (Index i = 0; i < n; ++i) idx[i] = i;
    return BasicCsrMatrix(n, n, std::move(ptr), std::move(idx),
                          std::vector<Scalar>(static_cast<std::size_t>(n), Scalar(1)));
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index nnz() const { return static_cast<Index>(values_.size()); }

  std::span<const Index> row_ptr() const { return row_ptr_; }
  std::span<const Index> col_idx() const { return col_idx_; }
  std::span<const Scalar> values() const { return values_; }

  Index row_nnz(Index r) const { return row_ptr_[r + 1] - row_ptr_[r]; }
  std::span<const Index> row_cols(Index r) const {
    return std::span<const Index>(col_idx_).subspan(row_ptr_[r], row_nnz(r));
  }
  std::span<const Scalar> row_values(Index r) const {
    return std::span<const Scalar>(values_).subspan(row_ptr_[r], row_nnz(r));
  }

  friend bool operator==(const BasicCsrMatrix& a, const BasicCsrMatrix& b) {
    if (a.rows_ != b.rows_ || a.cols_ != b.cols_ || a.row_ptr_ != b.row_ptr_ ||
        a.col_idx_ != b.col_idx_ || a.values_.size() != b.values_.size()) {
      return false;
    }
    // Bitwise, so that -0.0f and NaN payloads are distinguished.
    return std::equal(a.values_.begin(), a.values_.end(), b.values_.begin(),
                      [](Scalar x, Scalar y) {
                        return std::memcmp(&x, &y, sizeof(Scalar)) == 0;
                      });
  }

 private:
  void validate() const {
    if (rows_ < 0 || cols_ < 0) throw FormatError("csr: negative dimension");
    if (row_ptr_.size() != static_cast<std::size_t>(rows_) + 1) {
      throw FormatError("csr: row_ptr length " + std::to_string(row_ptr_.size()) +
                        " != rows+1 = " + std::to_string(rows_ + 1));
    }
    if (col_idx_.size() != values_.size()) {
      throw FormatError("csr: col_idx and values lengths differ");
    }
    if (row_ptr_.front() != 0) throw FormatError("csr: row_ptr[0] must be 0");
    if (row_ptr_.back() != static_cast<Index>(values_.size())) {
      throw FormatError("csr: row_ptr[m] = " + std::to_string(row_ptr_.back()) +
                        " but nnz = " + std::to_string(values_.size()));
    }
    for (Index r = 0; r < rows_; ++r) {
      if (row_ptr_[r + 1] < row_ptr_[r]) throw FormatError("csr: row_ptr decreases at row " + std::to_string(r));
      for (Index k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
        if (col_idx_[k] < 0 || col_idx_[k] >= cols_) {
          throw FormatError("csr: column index " + std::to_string(col_idx_[k]) +
                            " out of bounds in row " + std::to_string(r));
        }
        if (k > row_ptr_[r] && col_idx_[k] <= col_idx_[k - 1]) {
          throw FormatError("csr: column indices not strictly increasing in row " + std::to_string(r));
        }
        if (values_[k] == Scalar(0)) {
          throw FormatError("csr: explicit zero stored in row " + std::to_string(r));
        }
      }
    }
  }

  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Index> row_ptr_;
  std::vector<Index> col_idx_;
  std::vector<Scalar> values_;
};

using CsrMatrix = BasicCsrMatrix<float>;

struct SparsityStats {
  Index nnz = 0;
  double density = 0.0;
  Index rows_nonempty = 0;
};

template <typename Scalar>
SparsityStats sparsity_stats(const BasicCsrMatrix<Scalar>& a) {
  SparsityStats s;
  s.nnz = a.nnz();
  const double cells = static_cast<double>(a.rows()) * a.cols();
  s.density = cells > 0 ? s.nnz / cells : 0.0;
  for (Index r = 0; r < a.rows(); ++r) s.rows_nonempty += a.row_nnz(r) > 0 ? 1 : 0;
  return s;
}

/// Drops every entry with |v| <= zero_tol.
template <typename Derived>
BasicCsrMatrix<typename Derived::Scalar> csr_from_dense(const Eigen::MatrixBase<Derived>& d,
                                                        double zero_tol = 0.0) {
  using Scalar = typename Derived::Scalar;
  if (zero_tol < 0) throw ConfigError("csr_from_dense: zero_tol must be nonnegative");
  const auto rows = static_cast<Index>(d.rows());
  const auto cols = static_cast<Index>(d.cols());
  std::vector<Index> ptr{0};
  std::vector<Index> idx;
  std::vector<Scalar> val;
  ptr.reserve(static_cast<std::size_t>(rows) + 1);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const Scalar v = d(r, c);
      if (v == Scalar(0) || std::abs(static_cast<double>(v)) <= zero_tol) continue;
      idx.push_back(c);
      val.push_back(v);
    }
    ptr.push_back(static_cast<Index>(val.size()));
  }
  return BasicCsrMatrix<Scalar>(rows, cols, std::move(ptr), std::move(idx), std::move(val));
}

template <typename Scalar>
DenseT<Scalar> csr_to_dense(const BasicCsrMatrix<Scalar>& a) {
  DenseT<Scalar> d = DenseT<Scalar>::Zero(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    auto cols = a.row_cols(r);
    auto vals = a.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) d(r, cols[k]) = vals[k];
  }
  return d;
}

/// Textbook product accumulated in a wider type and rounded on store.
/// Every element sums its k terms in ascending k order.
template <typename DA, typename DB>
DenseT<typename DA::Scalar> dense_matmul_oracle(const Eigen::MatrixBase<DA>& a,
                                                const Eigen::MatrixBase<DB>& b) {
  using Scalar = typename DA::Scalar;
  using Accum = OracleAccumT<Scalar>;
  static_assert(std::is_same_v<Scalar, typename DB::Scalar>, "operand scalar types differ");
  if (a.cols() != b.rows()) {
    throw DimensionError("dense_matmul_oracle: inner dimensions " + std::to_string(a.cols()) +
                         " and " + std::to_string(b.rows()) + " differ");
  }
  const DenseT<Scalar> lhs = a;
  const DenseT<Scalar> rhs = b;
  DenseT<Scalar> c(lhs.rows(), rhs.cols());
  std::vector<Accum> acc(static_cast<std::size_t>(rhs.cols()));
  for (Eigen::Index i = 0; i < lhs.rows(); ++i) {
    std::fill(acc.begin(), acc.end(), Accum(0));
    for (Eigen::Index k = 0; k < lhs.cols(); ++k) {
      const Accum aik = lhs(i, k);
      const Scalar* brow = rhs.data() + k * rhs.cols();
      for (Eigen::Index j = 0; j < rhs.cols(); ++j) acc[j] += aik * static_cast<Accum>(brow[j]);
    }
    for (Eigen::Index j = 0; j < rhs.cols(); ++j) c(i, j) = static_cast<Scalar>(acc[j]);
  }
  return c;
}

/// Generates a rows x cols matrix from unit Gaussian draws, keeping exactly
/// round((1 - sparsity) * rows * cols) entries of largest magnitude.
/// Ties in magnitude keep the lower row-major position.
CsrMatrix generate_synthetic(Index rows, Index cols, double sparsity, std::uint64_t seed);

/// Number of nonzeros generate_synthetic keeps.
std::int64_t synthetic_nnz_target(Index rows, Index cols, double sparsity);

/// Dense matrix of unit Gaussian draws (used for B operands and inputs).
DenseMatrix random_dense(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed);

/// In-repo dense baseline: i-k-j triple loop with 32-bit accumulation.
void dense_matmul_f32(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& c);
/// Rows [r0, r1) of the same product into a preallocated C.
void dense_matmul_f32_rows(const DenseMatrix& a, const DenseMatrix& b, Eigen::Ref<DenseMatrix> c, Index r0,
                           Index r1);

/// Row-wise CSR SpMM with 32-bit accumulation. Each output element sums its
/// terms in ascending column order, which is also the order every generated
/// kernel uses, so the two agree bitwise.
void csr_spmm(const CsrMatrix& a, const DenseMatrix& b, DenseMatrix& c);
DenseMatrix csr_spmm(const CsrMatrix& a, const DenseMatrix& b);
void csr_spmm_rows(const CsrMatrix& a, const DenseMatrix& b, Eigen::Ref<DenseMatrix> c, Index r0, Index r1);

}  // namespace sparsekit
