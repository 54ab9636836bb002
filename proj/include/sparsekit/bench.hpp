// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sparsekit/kernel.hpp"
#include "sparsekit/timing.hpp"

namespace sparsekit {

enum class SuiteKind { Spmm, Conv };
std::string_view to_string(SuiteKind kind);
SuiteKind parse_suite_kind(std::string_view name);

/// A grid of benchmark problems. spmm problems are size x size matrices
/// times size x b_cols; conv problems are channels -> channels 3x3 pad 1 on
/// image x image inputs.
struct SuiteSpec {
  SuiteKind kind = SuiteKind::Spmm;
  std::vector<Index> sizes;        // spmm
  std::vector<Index> b_cols;       // spmm
  std::vector<Index> channels;     // conv
  std::vector<Index> images;       // conv
  std::vector<double> sparsities;
  int seeds = 1;
  int threads = 1;
  bool tune = false;
  std::optional<MicrokernelConfig> config;
  TimingOptions timing;

  /// Throws ConfigError on empty axes, dims < 1, sparsity outside [0, 1),
  /// seeds < 1 or threads < 1.
  void validate() const;
  std::size_t problem_count() const;

  /// Small grid that finishes in minutes.
  static SuiteSpec desk(SuiteKind kind);
  /// The full grid (768 spmm problems).
  static SuiteSpec full(SuiteKind kind);
};

/// One problem. For conv, m = out channels, n = in_channels*9 (the
/// flattened reduction) and b_cols = output pixels.
struct BenchRecord {
  SuiteKind kind = SuiteKind::Spmm;
  Index m = 0, n = 0, b_cols = 0;
  double sparsity = 0.0;
  int seed = 0;
  int threads = 1;
  std::string config;
  double time_baseline_dense = 0.0;
  double time_baseline_csr = 0.0;
  double time_kernel = 0.0;
  double speedup_dense = 0.0;
  double speedup_csr = 0.0;
  bool correct = false;
  std::string error;  // set when the correctness check failed

  friend bool operator==(const BenchRecord&, const BenchRecord&) = default;
};

/// Deterministic problem seed from the grid point.
std::uint64_t problem_seed(SuiteKind kind, Index size, double sparsity, int seed);

/// Runs every problem: generate from seed, check against the 64-bit oracle,
/// then time dense baseline, CSR baseline and the generated kernel. Records
/// failing the check are flagged and left untimed.
std::vector<BenchRecord> run_suite(const SuiteSpec& spec);

struct SuiteSummary {
  struct Group {
    double sparsity = 0.0;
    int count = 0;
    double geomean_speedup_dense = 0.0;
    double geomean_speedup_csr = 0.0;
  };
  std::vector<Group> by_sparsity;  // ascending sparsity
  double geomean_speedup_dense = 0.0;
  double geomean_speedup_csr = 0.0;
  /// Sorted dense speedups with cumulative fraction.
  std::vector<std::pair<double, double>> cdf;
  int records = 0;
};

double geomean(std::span<const double> xs);

/// Throws ConfigError on empty input or any record that failed its check.
SuiteSummary summarize(std::span<const BenchRecord> records);

/// CSV with the fixed header below; numbers in shortest round-trip form.
inline constexpr std::string_view kBenchCsvHeader =
    "kind,m,n,b_cols,sparsity,seed,threads,config,time_baseline_dense,time_baseline_csr,time_kernel,"
    "speedup_dense,speedup_csr,correct";
inline constexpr std::string_view kGeomeanCsvHeader = "sparsity,count,geomean_speedup_dense,geomean_speedup_csr";
inline constexpr std::string_view kCdfCsvHeader = "speedup_dense,cumulative_fraction";

void write_records_csv(std::span<const BenchRecord> records, std::ostream& out);
/// Parses and validates a records CSV (header, column count, types).
std::vector<BenchRecord> read_records_csv(std::istream& in);
void write_summary_csv(const SuiteSummary& s, std::ostream& geomean_out, std::ostream& cdf_out);
/// One-line JSON object.
std::string summary_json(const SuiteSummary& s, std::span<const BenchRecord> records);

std::string format_double(double v);

}  // namespace sparsekit
