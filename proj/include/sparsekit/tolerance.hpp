// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "sparsekit/tensor.hpp"

namespace sparsekit {

struct Tolerance {
  double rel = 1e-5;
  double abs = 1e-6;
};

/// Outcome of an element-wise comparison against an oracle.
struct Comparison {
  bool passed = true;
  Eigen::Index elements = 0;
  Eigen::Index failures = 0;
  double max_abs_error = 0.0;
  /// max over elements of |actual - expected| / max(scale, tiny)
  double max_rel_error = 0.0;
  Eigen::Index worst_row = -1;
  Eigen::Index worst_col = -1;

  std::string summary() const;
};

/// Element passes when |actual - expected| <= tol.rel * scale + tol.abs.
///
/// For products, `scale` should be (|A| |B|)_ij, the magnitude of the terms
/// the element was summed from; reassociating a float sum perturbs the
/// result in proportion to that, not to |expected|. Pass `expected` itself
/// (or use compare_relative) for a plain relative check.
Comparison compare_scaled(const DenseMatrix& actual, const DenseMatrix& expected,
                          const DenseMatrix& scale, Tolerance tol = {});

/// Plain per-element relative check: scale = |expected|.
Comparison compare_relative(const DenseMatrix& actual, const DenseMatrix& expected,
                            Tolerance tol = {});

/// Oracle product together with its per-element magnitude (|A| |B|).
struct OracleProduct {
  DenseMatrix value;
  DenseMatrix magnitude;
};

OracleProduct oracle_product(const DenseMatrix& a, const DenseMatrix& b);

inline bool bitwise_equal(const DenseMatrix& x, const DenseMatrix& y) {
  return x.rows() == y.rows() && x.cols() == y.cols() &&
         std::memcmp(x.data(), y.data(), sizeof(float) * static_cast<std::size_t>(x.size())) == 0;
}

}  // namespace sparsekit
