// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparsekit/autotune.hpp"

namespace sparsekit {

std::vector<MicrokernelConfig> default_tune_space(Index n, int vector_width, int register_budget) {
  std::vector<MicrokernelConfig> space;
  for (int k_split : {1, 2, 4, 8}) {
    if (k_split > 1 && n < 32 * k_split) continue;
    for (int tile_rows = 1; tile_rows <= 4; ++tile_rows) {
      for (int tile_vcols : {1, 2, 4}) {
        MicrokernelConfig cfg{tile_rows, tile_vcols, vector_width, k_split};
        if (config_is_valid(cfg, n, register_budget)) space.push_back(cfg);
      }
    }
  }
  return space;
}

TuneReport autotune(const CsrMatrix& a, Index b_cols, std::span<const MicrokernelConfig> space,
                    TimingOptions timing, std::string_view backend, int register_budget) {
  if (space.empty()) throw ConfigError("autotune: empty tuning space");
  for (const auto& cfg : space) validate_config(cfg, a.cols(), register_budget);

  const DenseMatrix b = random_dense(a.cols(), b_cols, 0x5eed);
  DenseMatrix c(a.rows(), b_cols);
  const DenseOperand operand(b);

  TuneReport report;
  report.candidates.reserve(space.size());
  for (const auto& cfg : space) {
    const auto kernel = lower_kernel(generate_kernel(a, b_cols, cfg, register_budget), backend);
    const double t = median_time([&] { kernel->run(operand, c); }, timing);
    report.candidates.push_back({cfg, t, timing.runs});
  }
  const auto best = std::min_element(report.candidates.begin(), report.candidates.end(),
                                     [](const TuneCandidate& x, const TuneCandidate& y) {
                                       return x.median_seconds < y.median_seconds;
                                     });
  report.best = best->config;
  report.best_median_seconds = best->median_seconds;
  return report;
}

}  // namespace sparsekit
