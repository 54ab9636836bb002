// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

// Versioned binary serialization of KernelProgram, all fields little-endian:
//
//   "SPKN"  u32 version
//   i32 tile_rows, tile_vcols, vector_width, k_split, register_budget
//   i32 m, n, b_cols
//   u64 instruction count, then per instruction: u8 op, u8 r0, u8 r1, u8 r2, i32 index
//   u64 nnz, then nnz f32 ordered values, then nnz i32 slot_of_csr

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "sparsekit/kernel.hpp"

namespace sparsekit {

inline constexpr std::uint32_t kKernelBlobVersion = 1;

std::string serialize_kernel(const KernelProgram& p);
/// Throws FormatError on bad magic, unsupported version, truncation or an
/// invalid program.
KernelProgram deserialize_kernel(std::string_view blob);

void save_kernel(const KernelProgram& p, const std::filesystem::path& path);
KernelProgram load_kernel(const std::filesystem::path& path);

}  // namespace sparsekit
