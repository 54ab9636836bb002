// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparsekit/elementwise.hpp"

#include <cmath>
#include <string>

namespace sparsekit {

std::string_view to_string(ElementwiseOp op) {
  switch (op) {
    case ElementwiseOp::BiasAdd: return "bias_add";
    case ElementwiseOp::Relu: return "relu";
    case ElementwiseOp::Gelu: return "gelu";
    case ElementwiseOp::Scale: return "scale";
    case ElementwiseOp::Add: return "add";
  }
  return "?";
}

ElementwiseOp parse_elementwise_op(std::string_view name) {
  if (name == "bias_add") return ElementwiseOp::BiasAdd;
  if (name == "relu") return ElementwiseOp::Relu;
  if (name == "gelu") return ElementwiseOp::Gelu;
  if (name == "scale") return ElementwiseOp::Scale;
  if (name == "add") return ElementwiseOp::Add;
  throw FormatError("unknown elementwise op '" + std::string(name) + "'");
}

float gelu(float x) { return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f)); }

void apply_rows(const EpilogueOp& op, Eigen::Ref<DenseMatrix> x, Index row_begin, Index row_end) {
  for (Index r = row_begin; r < row_end; ++r) {
    float* row = x.data() + static_cast<Eigen::Index>(r) * x.outerStride();
    for (Eigen::Index j = 0; j < x.cols(); ++j) row[j] = op.apply(r, row[j]);
  }
}

}  // namespace sparsekit
