// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparsekit/matrix_io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace sparsekit {

static_assert(std::endian::native == std::endian::little, "binary matrix files assume a little-endian host");

namespace io_detail {

std::string read_line(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(std::string("unexpected end of file reading ") + what);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

namespace {

template <typename T, typename Parse>
std::vector<T> parse_tokens(const std::string& line, const char* what, Parse parse) {
  std::vector<T> out;
  const char* p = line.data();
  const char* end = p + line.size();
  while (true) {
    while (p < end && (*p == ' ' || *p == '\t')) ++p;
    if (p == end) break;
    T value{};
    auto [next, ec] = parse(p, end, value);
    if (ec != std::errc() || (next < end && *next != ' ' && *next != '\t')) {
      throw FormatError(std::string("malformed token in ") + what + ": '" +
                        std::string(p, std::find(p, end, ' ')) + "'");
    }
    out.push_back(value);
    p = next;
  }
  return out;
}

}  // namespace

std::vector<long long> parse_ints(const std::string& line, const char* what) {
  return parse_tokens<long long>(line, what, [](const char* b, const char* e, long long& v) {
    return std::from_chars(b, e, v);
  });
}

}  // namespace io_detail

namespace {

std::vector<float> parse_floats(const std::string& line) {
  std::vector<float> out;
  const char* p = line.data();
  const char* end = p + line.size();
  while (true) {
    while (p < end && (*p == ' ' || *p == '\t')) ++p;
    if (p == end) break;
    float v = 0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc() || (next < end && *next != ' ' && *next != '\t')) {
      throw FormatError("malformed value token in values line");
    }
    out.push_back(v);
    p = next;
  }
  return out;
}

std::vector<Index> to_index(const std::vector<long long>& v, const char* what) {
  std::vector<Index> out;
  out.reserve(v.size());
  for (long long x : v) {
    if (x < 0 || x > std::numeric_limits<Index>::max()) {
      throw FormatError(std::string("index out of range in ") + what + ": " + std::to_string(x));
    }
    out.push_back(static_cast<Index>(x));
  }
  return out;
}

void write_ints(std::ostream& out, std::span<const Index> v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out << ' ';
    out << v[i];
  }
  out << '\n';
}

}  // namespace

std::string format_float(float v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

MatrixFileFormat format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".bin" ? MatrixFileFormat::Binary : MatrixFileFormat::Text;
}

CsrMatrix read_matrix(std::istream& in, MatrixFileFormat format) {
  const auto header = io_detail::parse_ints(io_detail::read_line(in, "header"), "header");
  if (header.size() != 3) throw FormatError("malformed header: expected 'rows cols nnz'");
  for (long long h : header) {
    if (h < 0 || h > std::numeric_limits<Index>::max()) throw FormatError("malformed header: bad dimension");
  }
  const auto rows = static_cast<Index>(header[0]);
  const auto cols = static_cast<Index>(header[1]);
  const auto nnz = static_cast<std::size_t>(header[2]);

  auto row_ptr = to_index(io_detail::parse_ints(io_detail::read_line(in, "row pointers"), "row pointers"),
                          "row pointers");
  if (row_ptr.size() != static_cast<std::size_t>(rows) + 1) {
    throw FormatError("row pointer count " + std::to_string(row_ptr.size()) + " != rows+1");
  }
  if (static_cast<std::size_t>(row_ptr.back()) != nnz) {
    throw FormatError("nnz mismatch: header says " + std::to_string(nnz) + ", row_ptr[m] = " +
                      std::to_string(row_ptr.back()));
  }
  auto col_idx = to_index(io_detail::parse_ints(io_detail::read_line(in, "column indices"), "column indices"),
                          "column indices");
  if (col_idx.size() != nnz) {
    throw FormatError("nnz mismatch: " + std::to_string(col_idx.size()) + " column indices for nnz " +
                      std::to_string(nnz));
  }
  for (Index c : col_idx) {
    if (c >= cols) throw FormatError("column index " + std::to_string(c) + " out of bounds");
  }

  std::vector<float> values;
  if (format == MatrixFileFormat::Text) {
    values = parse_floats(io_detail::read_line(in, "values"));
    if (values.size() != nnz) {
      throw FormatError("nnz mismatch: " + std::to_string(values.size()) + " values for nnz " +
                        std::to_string(nnz));
    }
  } else {
    values.resize(nnz);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(nnz * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != nnz * sizeof(float)) {
      throw FormatError("nnz mismatch: binary value block truncated");
    }
  }
  return CsrMatrix(rows, cols, std::move(row_ptr), std::move(col_idx), std::move(values));
}

void write_matrix(const CsrMatrix& a, std::ostream& out, MatrixFileFormat format) {
  out << a.rows() << ' ' << a.cols() << ' ' << a.nnz() << '\n';
  write_ints(out, a.row_ptr());
  write_ints(out, a.col_idx());
  if (format == MatrixFileFormat::Text) {
    auto vals = a.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (i) out << ' ';
      out << format_float(vals[i]);
    }
    out << '\n';
  } else {
    out.write(reinterpret_cast<const char*>(a.values().data()),
              static_cast<std::streamsize>(a.values().size() * sizeof(float)));
  }
}

CsrMatrix read_matrix_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open matrix file " + path.string());
  try {
    return read_matrix(in, format_for_path(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_matrix_file(const CsrMatrix& a, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write matrix file " + path.string());
  write_matrix(a, out, format_for_path(path));
  if (!out) throw FileError("write failed for " + path.string());
}

}  // namespace sparsekit
