// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparsekit/tensor.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "sparsekit/tolerance.hpp"

namespace sparsekit {

std::int64_t synthetic_nnz_target(Index rows, Index cols, double sparsity) {
  const double cells = static_cast<double>(rows) * static_cast<double>(cols);
  return std::llround((1.0 - sparsity) * cells);
}

CsrMatrix generate_synthetic(Index rows, Index cols, double sparsity, std::uint64_t seed) {
  if (!(sparsity >= 0.0 && sparsity < 1.0)) {
    throw ConfigError("generate_synthetic: sparsity must lie in [0, 1), got " + std::to_string(sparsity));
  }
  if (rows < 1 || cols < 1) throw ConfigError("generate_synthetic: dimensions must be >= 1");

  const std::size_t cells = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  std::vector<float> draws(cells);
  for (auto& v : draws) {
    // A zero draw would become an explicit zero; redraw.
    do {
      v = gauss(rng);
    } while (v == 0.0f);
  }

  const auto keep = static_cast<std::size_t>(synthetic_nnz_target(rows, cols, sparsity));
  std::vector<std::uint32_t> order(cells);
  std::iota(order.begin(), order.end(), 0u);
  auto by_magnitude = [&](std::uint32_t x, std::uint32_t y) {
    const float ax = std::abs(draws[x]);
    const float ay = std::abs(draws[y]);
    return ax != ay ? ax > ay : x < y;
  };
  if (keep < cells) {
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                     by_magnitude);
  }
  std::vector<char> kept(cells, 0);
  for (std::size_t i = 0; i < keep; ++i) kept[order[i]] = 1;

  std::vector<Index> ptr{0};
  std::vector<Index> idx;
  std::vector<float> val;
  ptr.reserve(static_cast<std::size_t>(rows) + 1);
  idx.reserve(keep);
  val.reserve(keep);
  for (Index r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * static_cast<std::size_t>(cols);
    for (Index c = 0; c < cols; ++c) {
      if (kept[base + c]) {
        idx.push_back(c);
        val.push_back(draws[base + c]);
      }
    }
    ptr.push_back(static_cast<Index>(val.size()));
  }
  return CsrMatrix(rows, cols, std::move(ptr), std::move(idx), std::move(val));
}

DenseMatrix random_dense(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  DenseMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
  return m;
}

void dense_matmul_f32(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& c) {
  if (a.cols() != b.rows()) throw DimensionError("dense_matmul_f32: inner dimensions differ");
  c.resize(a.rows(), b.cols());
  dense_matmul_f32_rows(a, b, c, 0, static_cast<Index>(a.rows()));
}

void dense_matmul_f32_rows(const DenseMatrix& a, const DenseMatrix& b, Eigen::Ref<DenseMatrix> c, Index r0,
                           Index r1) {
  const Eigen::Index n = b.cols();
  for (Eigen::Index i = r0; i < r1; ++i) {
    float* crow = c.data() + i * c.outerStride();
    std::fill_n(crow, n, 0.0f);
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
      const float aik = a(i, k);
      const float* brow = b.data() + k * n;
      for (Eigen::Index j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

void csr_spmm(const CsrMatrix& a, const DenseMatrix& b, DenseMatrix& c) {
  if (a.cols() != b.rows()) {
    throw DimensionError("csr_spmm: A has " + std::to_string(a.cols()) + " columns but B has " +
                         std::to_string(b.rows()) + " rows");
  }
  c.resize(a.rows(), b.cols());
  csr_spmm_rows(a, b, c, 0, a.rows());
}

void csr_spmm_rows(const CsrMatrix& a, const DenseMatrix& b, Eigen::Ref<DenseMatrix> c, Index r0, Index r1) {
  const Eigen::Index n = b.cols();
  for (Index r = r0; r < r1; ++r) {
    float* crow = c.data() + static_cast<Eigen::Index>(r) * c.outerStride();
    std::fill_n(crow, n, 0.0f);
    auto cols = a.row_cols(r);
    auto vals = a.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const float v = vals[k];
      const float* brow = b.data() + static_cast<Eigen::Index>(cols[k]) * n;
      for (Eigen::Index j = 0; j < n; ++j) crow[j] += v * brow[j];
    }
  }
}

DenseMatrix csr_spmm(const CsrMatrix& a, const DenseMatrix& b) {
  DenseMatrix c;
  csr_spmm(a, b, c);
  return c;
}

// ---------------------------------------------------------------------------

std::string Comparison::summary() const {
  std::string s = passed ? "ok" : "FAILED";
  s += " (" + std::to_string(failures) + "/" + std::to_string(elements) + " out of tolerance, max abs " +
       std::to_string(max_abs_error) + ", max rel " + std::to_string(max_rel_error) + ")";
  return s;
}

Comparison compare_scaled(const DenseMatrix& actual, const DenseMatrix& expected,
                          const DenseMatrix& scale, Tolerance tol) {
  if (actual.rows() != expected.rows() || actual.cols() != expected.cols() ||
      scale.rows() != expected.rows() || scale.cols() != expected.cols()) {
    throw DimensionError("compare: shape mismatch");
  }
  Comparison out;
  out.elements = expected.size();
  for (Eigen::Index i = 0; i < expected.rows(); ++i) {
    for (Eigen::Index j = 0; j < expected.cols(); ++j) {
      const double e = expected(i, j);
      const double a = actual(i, j);
      const double s = std::abs(static_cast<double>(scale(i, j)));
      const double err = std::abs(a - e);
      const bool ok = std::isfinite(a) && err <= tol.rel * s + tol.abs;
      if (!ok) ++out.failures;
      const double rel = err / std::max(s, 1e-30);
      if (err > out.max_abs_error) out.max_abs_error = err;
      if (rel > out.max_rel_error && err > tol.abs) {
        out.max_rel_error = rel;
        out.worst_row = i;
        out.worst_col = j;
      }
    }
  }
  out.passed = out.failures == 0;
  return out;
}

Comparison compare_relative(const DenseMatrix& actual, const DenseMatrix& expected, Tolerance tol) {
  return compare_scaled(actual, expected, expected, tol);
}

OracleProduct oracle_product(const DenseMatrix& a, const DenseMatrix& b) {
  OracleProduct p;
  p.value = dense_matmul_oracle(a, b);
  p.magnitude = dense_matmul_oracle(a.cwiseAbs(), b.cwiseAbs());
  return p;
}

}  // namespace sparsekit
