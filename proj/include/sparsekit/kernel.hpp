// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

// Specialized SpMM kernel programs.
//
// A KernelProgram is the unrolled microkernel sequence for one column tile
// of the output: an instruction stream over virtual vector registers whose
// accumulator targets are fixed per instruction, plus the sparse values laid
// out in exactly the order the stream reads them. Executing the program
// repeats the stream once per column tile of width tile_vcols*vector_width
// (the last tile may be narrower).
//
// Traversal, for every column tile:
//   for each reduction tile (k_split contiguous column ranges of A)
//     for each row tile of height tile_rows
//       InitAcc (first k tile) or LoadAcc
//       for each A column in the k tile with a nonzero in the row tile
//         for each such nonzero, ascending row:
//           Broadcast value; LoadB once per column; Fma into row's accumulators
//       StoreAcc
//
// Register file layout: accumulators [0, tr*tv), B row slice [tr*tv, tr*tv+tv),
// broadcast register tr*tv+tv.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sparsekit/tensor.hpp"

namespace sparsekit {

inline constexpr int kDefaultRegisterBudget = 32;
inline constexpr int kMaxRegisterBudget = 64;

struct MicrokernelConfig {
  int tile_rows = 1;
  int tile_vcols = 1;
  int vector_width = 8;
  int k_split = 1;

  int accumulator_registers() const { return tile_rows * tile_vcols; }
  int registers_required() const { return tile_rows * tile_vcols + tile_vcols + 1; }
  /// Output columns covered by one column tile.
  int tile_width() const { return tile_vcols * vector_width; }

  /// "rows x vcols x width / k", e.g. "4x2x8/1".
  std::string to_string() const;
  static MicrokernelConfig parse(std::string_view text);

  friend bool operator==(const MicrokernelConfig&, const MicrokernelConfig&) = default;
};

/// Throws ConfigError unless `cfg` is usable for a reduction dimension `n`
/// under `register_budget` virtual registers.
void validate_config(const MicrokernelConfig& cfg, Index n, int register_budget = kDefaultRegisterBudget);
bool config_is_valid(const MicrokernelConfig& cfg, Index n, int register_budget = kDefaultRegisterBudget);

enum class Opcode : std::uint8_t {
  InitAcc,    // acc[r0 .. r0+tr*tv) = 0
  LoadAcc,    // acc[r0 ..] = C(row tile `index`, current column tile)
  StoreAcc,   // C(row tile `index`, current column tile) = acc[r0 ..]; r2 = 1 on the last k tile
  LoadB,      // vreg[r0 .. r0+tv) = B(row `index`, current column tile)
  Broadcast,  // vreg[r0] = ordered_values[index] in every lane
  Fma,        // vreg[r2+v] += vreg[r0] * vreg[r1+v] for v < tv
};

std::string_view to_string(Opcode op);

struct KernelInstr {
  Opcode op = Opcode::InitAcc;
  std::uint8_t r0 = 0;
  std::uint8_t r1 = 0;
  std::uint8_t r2 = 0;
  std::int32_t index = 0;

  static KernelInstr init_acc(int acc) { return {Opcode::InitAcc, u8(acc), 0, 0, 0}; }
  static KernelInstr load_acc(Index row_tile, int acc) { return {Opcode::LoadAcc, u8(acc), 0, 0, row_tile}; }
  static KernelInstr store_acc(Index row_tile, int acc, bool final) {
    return {Opcode::StoreAcc, u8(acc), 0, static_cast<std::uint8_t>(final ? 1 : 0), row_tile};
  }
  static KernelInstr load_b(Index b_row, int dst) { return {Opcode::LoadB, u8(dst), 0, 0, b_row}; }
  static KernelInstr broadcast(Index slot, int dst) { return {Opcode::Broadcast, u8(dst), 0, 0, slot}; }
  static KernelInstr fma(int a_src, int b_src, int acc) { return {Opcode::Fma, u8(a_src), u8(b_src), u8(acc), 0}; }

  bool is_final_store() const { return op == Opcode::StoreAcc && r2 != 0; }

  friend bool operator==(const KernelInstr&, const KernelInstr&) = default;

 private:
  static std::uint8_t u8(int v) { return static_cast<std::uint8_t>(v); }
};

struct ColumnTiling {
  Index b_cols = 0;
  Index tile_width = 0;
  Index tiles = 0;
  Index tail_width = 0;  // width of the last tile (== tile_width when it divides)
};

ColumnTiling column_tiling(Index b_cols, const MicrokernelConfig& cfg);

struct KernelProgram {
  MicrokernelConfig config;
  int register_budget = kDefaultRegisterBudget;
  Index m = 0;
  Index n = 0;
  /// Output width the program was generated for; execution accepts any width.
  Index b_cols = 0;
  std::vector<KernelInstr> instrs;
  std::vector<float> ordered_values;
  /// slot_of_csr[i] is the position in ordered_values of CSR value i.
  std::vector<Index> slot_of_csr;

  Index nnz() const { return static_cast<Index>(ordered_values.size()); }
  Index row_tiles() const { return (m + config.tile_rows - 1) / config.tile_rows; }
  Index k_begin(int k_tile) const {
    return static_cast<Index>(static_cast<std::int64_t>(k_tile) * n / config.k_split);
  }

  friend bool operator==(const KernelProgram&, const KernelProgram&) = default;
};

/// Instruction range [begin, end) computing one (k tile, row tile) pair.
struct Segment {
  int k_tile = 0;
  Index row_tile = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Segments ordered k tile major; throws FormatError if the stream does not
/// follow the traversal above.
std::vector<Segment> index_segments(const KernelProgram& p);

struct InstrCounts {
  std::int64_t init_acc = 0;
  std::int64_t load_acc = 0;
  std::int64_t store_acc = 0;
  std::int64_t load_b = 0;
  std::int64_t broadcast = 0;
  std::int64_t fma = 0;

  friend bool operator==(const InstrCounts&, const InstrCounts&) = default;
};

/// Counts over the instruction stream (one column-tile pass).
InstrCounts static_counts(const KernelProgram& p);
/// Counts executed for an output of width `b_cols`.
InstrCounts executed_counts(const KernelProgram& p, Index b_cols);

/// True when Broadcast value slots strictly increase along the stream.
bool broadcasts_sequential(const KernelProgram& p);
/// Highest virtual register index referenced, or -1 for an empty stream.
int max_register_referenced(const KernelProgram& p);

KernelProgram generate_kernel(const CsrMatrix& a, Index b_cols, const MicrokernelConfig& config,
                              int register_budget = kDefaultRegisterBudget);

/// Structural validation of a program (config, register indices, value
/// slots, B rows, segment layout); throws FormatError or ConfigError.
void validate_program(const KernelProgram& p);

/// Reference execution: interprets the program over B (n x any width).
DenseMatrix execute_kernel(const KernelProgram& p, const DenseMatrix& b);

/// Recovers the CSR value array from the execution-ordered one.
std::vector<float> csr_values_from_ordered(const KernelProgram& p);

/// Rebuilds A from the instruction stream alone (rows from accumulator
/// targets, columns from LoadB, values from Broadcast slots).
CsrMatrix decode_matrix(const KernelProgram& p);

}  // namespace sparsekit
