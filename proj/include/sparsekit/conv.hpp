// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "sparsekit/backend.hpp"
#include "sparsekit/kernel.hpp"
#include "sparsekit/tensor.hpp"

namespace sparsekit {

/// Shape of a 2-D convolution. Activations are stored channel-major as a
/// channels x (height*width) DenseMatrix.
struct ConvSpec {
  Index in_channels = 1;
  Index out_channels = 1;
  Index filter_h = 1;
  Index filter_w = 1;
  Index image_h = 1;
  Index image_w = 1;
  Index pad = 0;
  Index stride = 1;

  Index out_h() const { return (image_h + 2 * pad - filter_h) / stride + 1; }
  Index out_w() const { return (image_w + 2 * pad - filter_w) / stride + 1; }
  Index reduction() const { return in_channels * filter_h * filter_w; }
  Index in_pixels() const { return image_h * image_w; }
  Index out_pixels() const { return out_h() * out_w(); }

  bool operator==(const ConvSpec&) const = default;
};

/// Throws ConfigError unless every count is positive, pad >= 0, stride >= 1
/// and the output is at least 1x1.
void validate_conv_spec(const ConvSpec& spec);

/// Dense OC x IC x FY x FX filter tensor, row-major in that index order.
class FilterBank {
 public:
  FilterBank() = default;
  FilterBank(Index oc, Index ic, Index fy, Index fx);

  Index out_channels() const { return oc_; }
  Index in_channels() const { return ic_; }
  Index filter_h() const { return fy_; }
  Index filter_w() const { return fx_; }

  float& operator()(Index oc, Index ic, Index fy, Index fx) { return data_[offset(oc, ic, fy, fx)]; }
  float operator()(Index oc, Index ic, Index fy, Index fx) const { return data_[offset(oc, ic, fy, fx)]; }
  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  bool operator==(const FilterBank&) const = default;

 private:
  std::size_t offset(Index oc, Index ic, Index fy, Index fx) const {
    return ((static_cast<std::size_t>(oc) * ic_ + ic) * fy_ + fy) * fx_ + fx;
  }

  Index oc_ = 0, ic_ = 0, fy_ = 0, fx_ = 0;
  std::vector<float> data_;
};

/// OC x (IC*FY*FX) CSR; column = ic*FY*FX + fy*FX + fx.
CsrMatrix flatten_filters(const FilterBank& filters);
FilterBank unflatten_filters(const CsrMatrix& flat, Index ic, Index fy, Index fx);

/// Filters with the given sparsity, largest-magnitude selection as in
/// generate_synthetic.
FilterBank generate_synthetic_filters(Index oc, Index ic, Index fy, Index fx, double sparsity,
                                      std::uint64_t seed);

/// Maps (reduction index k, output pixel p) to an input offset. Nothing is
/// materialized; each lookup is a few integer ops.
class VirtualOperandPlan {
 public:
  static constexpr std::int64_t kPadding = -1;

  explicit VirtualOperandPlan(const ConvSpec& spec);

  const ConvSpec& spec() const { return spec_; }
  Index rows() const { return spec_.reduction(); }
  Index cols() const { return spec_.out_pixels(); }

  /// Offset into the IC x H x W input, or kPadding.
  std::int64_t offset(Index k, Index p) const;

  /// Writes the virtual row k for pixels p0 .. p0+count of `input`.
  void gather(const float* input, Index k, Index p0, Index count, float* dst) const;

 private:
  ConvSpec spec_;
};

VirtualOperandPlan build_virtual_plan(const ConvSpec& spec);

/// Materialized virtual operand (reduction x output pixels). Baselines only.
DenseMatrix im2col(const VirtualOperandPlan& plan, const DenseMatrix& input);

/// B operand realized from an input activation through a plan.
class ConvOperand final : public BOperand {
 public:
  /// `input` is IC x (H*W); it must outlive the operand.
  ConvOperand(const VirtualOperandPlan& plan, Eigen::Ref<const DenseMatrix> input);

  Index rows() const override { return plan_.rows(); }
  Index cols() const override { return plan_.cols(); }
  const float* row_data(Index row) const override;
  void gather(Index row, Index col0, Index count, float* dst) const override;

 private:
  const VirtualOperandPlan& plan_;
  Eigen::Ref<const DenseMatrix> input_;
  bool identity_;
};

/// A convolution compiled to a kernel program. Immutable once built.
class SparseConv {
 public:
  SparseConv(const ConvSpec& spec, const CsrMatrix& flat_filters, MicrokernelConfig config,
             std::string_view backend = kNativeBackend, int register_budget = kDefaultRegisterBudget);
  SparseConv(const ConvSpec& spec, std::shared_ptr<const ExecutableKernel> kernel);

  const ConvSpec& spec() const { return plan_.spec(); }
  const VirtualOperandPlan& plan() const { return plan_; }
  const ExecutableKernel& kernel() const { return *kernel_; }
  std::shared_ptr<const ExecutableKernel> shared_kernel() const { return kernel_; }

  /// input: IC x (H*W); output: OC x (H'*W').
  void run(Eigen::Ref<const DenseMatrix> input, Eigen::Ref<DenseMatrix> output, RowTileRange tiles,
           const Epilogue* epilogue = nullptr) const;
  void run(Eigen::Ref<const DenseMatrix> input, Eigen::Ref<DenseMatrix> output,
           const Epilogue* epilogue = nullptr) const {
    run(input, output, {0, kernel_->row_tiles()}, epilogue);
  }
  DenseMatrix operator()(const DenseMatrix& input) const;

 private:
  VirtualOperandPlan plan_;
  std::shared_ptr<const ExecutableKernel> kernel_;
};

/// One-shot convenience: flatten, generate, lower and run.
DenseMatrix sparse_conv(const FilterBank& filters, const DenseMatrix& input, const ConvSpec& spec,
                        MicrokernelConfig config = {}, std::string_view backend = kNativeBackend);

/// Filter file: a "conv OC IC FY FX" line followed by the flattened matrix.
FilterBank read_filters(std::istream& in);
void write_filters(const FilterBank& filters, std::ostream& out);
FilterBank read_filters_file(const std::filesystem::path& path);
void write_filters_file(const FilterBank& filters, const std::filesystem::path& path);

}  // namespace sparsekit
