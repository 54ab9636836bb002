// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "sparsekit/elementwise.hpp"
#include "sparsekit/kernel.hpp"

namespace sparsekit {

/// Source of the dense operand B. Either a real matrix or a virtual one
/// realized on demand (direct convolution).
class BOperand {
 public:
  virtual ~BOperand() = default;
  virtual Index rows() const = 0;
  virtual Index cols() const = 0;
  /// Pointer to a contiguous row, or nullptr if rows must be gathered.
  virtual const float* row_data(Index /*row*/) const { return nullptr; }
  /// Writes B(row, col0 .. col0+count) to dst.
  virtual void gather(Index row, Index col0, Index count, float* dst) const = 0;
};

class DenseOperand final : public BOperand {
 public:
  explicit DenseOperand(Eigen::Ref<const DenseMatrix> b) : b_(b) {}
  Index rows() const override { return static_cast<Index>(b_.rows()); }
  Index cols() const override { return static_cast<Index>(b_.cols()); }
  const float* row_data(Index row) const override { return b_.data() + row * b_.outerStride(); }
  void gather(Index row, Index col0, Index count, float* dst) const override {
    const float* src = row_data(row) + col0;
    std::copy(src, src + count, dst);
  }

 private:
  Eigen::Ref<const DenseMatrix> b_;
};

struct RowTileRange {
  Index begin = 0;
  Index end = 0;
};

/// A kernel program lowered for execution. Immutable; run() may be called
/// concurrently as long as callers write disjoint row tiles of C.
class ExecutableKernel {
 public:
  explicit ExecutableKernel(std::shared_ptr<const KernelProgram> program);
  virtual ~ExecutableKernel() = default;

  virtual std::string_view backend() const = 0;

  const KernelProgram& program() const { return *program_; }
  std::shared_ptr<const KernelProgram> shared_program() const { return program_; }
  Index row_tiles() const { return program_->row_tiles(); }

  /// Computes the rows of C covered by `tiles`. C is m x B.cols(). The
  /// epilogue, if given, is applied to each value as it is finally stored.
  void run(const BOperand& b, Eigen::Ref<DenseMatrix> c, RowTileRange tiles,
           const Epilogue* epilogue = nullptr) const;
  void run(const BOperand& b, Eigen::Ref<DenseMatrix> c, const Epilogue* epilogue = nullptr) const {
    run(b, c, {0, row_tiles()}, epilogue);
  }
  DenseMatrix operator()(const DenseMatrix& b) const;

 protected:
  virtual void run_tiles(const BOperand& b, Eigen::Ref<DenseMatrix> c, RowTileRange tiles,
                         const Epilogue* epilogue) const = 0;

  const std::vector<Segment>& segments() const { return segments_; }
  const Segment& segment(int k_tile, Index row_tile) const {
    return segments_[static_cast<std::size_t>(k_tile) * static_cast<std::size_t>(row_tiles()) +
                     static_cast<std::size_t>(row_tile)];
  }

 private:
  std::shared_ptr<const KernelProgram> program_;
  std::vector<Segment> segments_;
};

using KernelFactory =
    std::function<std::unique_ptr<ExecutableKernel>(std::shared_ptr<const KernelProgram>)>;

/// Registers (or replaces) a lowering backend.
void register_backend(std::string name, KernelFactory factory);
std::vector<std::string> registered_backends();

inline constexpr std::string_view kReferenceBackend = "reference";
inline constexpr std::string_view kNativeBackend = "native";

std::shared_ptr<const ExecutableKernel> lower_kernel(std::shared_ptr<const KernelProgram> program,
                                                     std::string_view backend);
std::shared_ptr<const ExecutableKernel> lower_kernel(KernelProgram program, std::string_view backend);

/// Interprets the program instruction by instruction (the reference backend).
void interpret_tiles(const KernelProgram& p, std::span<const Segment> segments, const BOperand& b,
                     Eigen::Ref<DenseMatrix> c, RowTileRange tiles, const Epilogue* epilogue);

}  // namespace sparsekit
