// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

// Matrix file format.
//
// Text variant (UTF-8, LF newlines):
//   line 1: "rows cols nnz"
//   line 2: rows+1 row pointers
//   line 3: nnz column indices
//   line 4: nnz decimal values (shortest round-trip representation)
//
// Binary variant: lines 1-3 exactly as above, followed by nnz little-endian
// IEEE-754 32-bit floats. Files whose name ends in ".bin" use it.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "sparsekit/tensor.hpp"

namespace sparsekit {

enum class MatrixFileFormat { Text, Binary };

/// Binary for a ".bin" extension, text otherwise.
MatrixFileFormat format_for_path(const std::filesystem::path& path);

CsrMatrix read_matrix(std::istream& in, MatrixFileFormat format);
void write_matrix(const CsrMatrix& a, std::ostream& out, MatrixFileFormat format);

CsrMatrix read_matrix_file(const std::filesystem::path& path);
void write_matrix_file(const CsrMatrix& a, const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same float.
std::string format_float(float v);

namespace io_detail {
/// Reads one LF-terminated line; throws FormatError naming `what` at EOF.
std::string read_line(std::istream& in, const char* what);
std::vector<long long> parse_ints(const std::string& line, const char* what);
}  // namespace io_detail

}  // namespace sparsekit
