// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "sparsekit/backend.hpp"
#include "sparsekit/kernel.hpp"
#include "sparsekit/timing.hpp"

namespace sparsekit {

struct TuneCandidate {
  MicrokernelConfig config;
  double median_seconds = 0.0;
  int runs = 0;
};

struct TuneReport {
  std::vector<TuneCandidate> candidates;
  MicrokernelConfig best;
  double best_median_seconds = 0.0;
};

/// tile_rows 1..4, tile_vcols {1,2,4}, k_split {1,2,4,8} with n >= 32*k_split,
/// keeping only configs that fit the register budget.
std::vector<MicrokernelConfig> default_tune_space(Index n, int vector_width = 8,
                                                  int register_budget = kDefaultRegisterBudget);

/// Times every config in `space` on a seeded random B of width b_cols and
/// picks the smallest median. Ties go to the earlier config.
TuneReport autotune(const CsrMatrix& a, Index b_cols, std::span<const MicrokernelConfig> space,
                    TimingOptions timing = {}, std::string_view backend = kNativeBackend,
                    int register_budget = kDefaultRegisterBudget);

}  // namespace sparsekit
