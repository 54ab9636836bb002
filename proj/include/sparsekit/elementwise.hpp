// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>
#include <vector>

#include "sparsekit/tensor.hpp"

namespace sparsekit {

/// Elementwise layer operations. BiasAdd and Scale carry one parameter per
/// channel (row); Add sums two activations (residual connections).
enum class ElementwiseOp { BiasAdd, Relu, Gelu, Scale, Add };

std::string_view to_string(ElementwiseOp op);
ElementwiseOp parse_elementwise_op(std::string_view name);

inline bool is_unary(ElementwiseOp op) { return op != ElementwiseOp::Add; }
inline bool is_channelwise(ElementwiseOp op) {
  return op == ElementwiseOp::BiasAdd || op == ElementwiseOp::Scale;
}

float gelu(float x);

/// One unary elementwise step applied to a kernel's output as it is stored.
struct EpilogueOp {
  ElementwiseOp op = ElementwiseOp::Relu;
  std::vector<float> params;  // per-channel, BiasAdd / Scale only

  float apply(Index row, float x) const {
    switch (op) {
      case ElementwiseOp::BiasAdd: return x + params[static_cast<std::size_t>(row)];
      case ElementwiseOp::Scale: return x * params[static_cast<std::size_t>(row)];
      case ElementwiseOp::Relu: return x > 0.0f ? x : 0.0f;
      case ElementwiseOp::Gelu: return gelu(x);
      case ElementwiseOp::Add: break;
    }
    return x;
  }

  friend bool operator==(const EpilogueOp&, const EpilogueOp&) = default;
};

using Epilogue = std::vector<EpilogueOp>;

inline float apply_epilogue(const Epilogue& epilogue, Index row, float x) {
  for (const auto& step : epilogue) x = step.apply(row, x);
  return x;
}

/// Applies a unary op to rows [row_begin, row_end) of `x` in place.
void apply_rows(const EpilogueOp& op, Eigen::Ref<DenseMatrix> x, Index row_begin, Index row_end);

}  // namespace sparsekit
