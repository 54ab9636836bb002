// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "sparsekit/matrix_io.hpp"
#include "sparsekit/tensor.hpp"
#include "sparsekit/tolerance.hpp"

namespace sparsekit {
namespace {

DenseMatrix mat(std::initializer_list<std::initializer_list<float>> rows) {
  DenseMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (auto r : rows) {
    Eigen::Index j = 0;
    for (float v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

template <typename T>
std::vector<T> vec(std::span<const T> s) {
  return {s.begin(), s.end()};
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sparsekit_test_" + name);
}

TEST(CsrFromDense, Identity) {
  const auto a = csr_from_dense(DenseMatrix::Identity(2, 2));
  EXPECT_EQ(vec(a.row_ptr()), (std::vector<Index>{0, 1, 2}));
  EXPECT_EQ(vec(a.col_idx()), (std::vector<Index>{0, 1}));
  EXPECT_EQ(vec(a.values()), (std::vector<float>{1, 1}));
}

TEST(CsrFromDense, AllZero) {
  const auto a = csr_from_dense(DenseMatrix::Zero(2, 2));
  EXPECT_EQ(vec(a.row_ptr()), (std::vector<Index>{0, 0, 0}));
  EXPECT_EQ(a.nnz(), 0);
}

TEST(CsrFromDense, AntiDiagonal) {
  const auto a = csr_from_dense(mat({{0, 2}, {3, 0}}));
  EXPECT_EQ(vec(a.row_ptr()), (std::vector<Index>{0, 1, 2}));
  EXPECT_EQ(vec(a.col_idx()), (std::vector<Index>{1, 0}));
  EXPECT_EQ(vec(a.values()), (std::vector<float>{2, 3}));
  EXPECT_EQ(csr_to_dense(a), mat({{0, 2}, {3, 0}}));
}

TEST(CsrFromDense, ZeroToleranceDropsSmallEntries) {
  const auto a = csr_from_dense(mat({{0.5f, -0.01f}, {0.02f, -2.0f}}), 0.02);
  EXPECT_EQ(vec(a.values()), (std::vector<float>{0.5f, -2.0f}));
  EXPECT_THROW(csr_from_dense(mat({{1}}), -1.0), ConfigError);
}

TEST(CsrFromDense, EmptyMatrix) {
  const auto a = csr_from_dense(DenseMatrix(0, 0));
  EXPECT_EQ(a.rows(), 0);
  EXPECT_EQ(vec(a.row_ptr()), (std::vector<Index>{0}));
}

TEST(CsrToDense, EmptyRowsAndIdentity) {
  const CsrMatrix zero(2, 2, {0, 0, 0}, {}, {});
  EXPECT_EQ(csr_to_dense(zero), DenseMatrix::Zero(2, 2));
  EXPECT_EQ(csr_to_dense(CsrMatrix::identity(3)), DenseMatrix::Identity(3, 3));
}

TEST(CsrMatrixInvariants, RejectsMalformedTriples) {
  EXPECT_THROW(CsrMatrix(2, 2, {0, 1}, {0}, {1.0f}), FormatError);               // short row_ptr
  EXPECT_THROW(CsrMatrix(2, 2, {0, 1, 1}, {2}, {1.0f}), FormatError);            // column out of range
  EXPECT_THROW(CsrMatrix(1, 3, {0, 2}, {1, 1}, {1.0f, 2.0f}), FormatError);      // not strictly increasing
  EXPECT_THROW(CsrMatrix(1, 2, {0, 1}, {0}, {0.0f}), FormatError);               // explicit zero
  EXPECT_THROW(CsrMatrix(2, 2, {0, 2, 1}, {0, 1}, {1.0f, 1.0f}), FormatError);   // decreasing
  EXPECT_THROW(CsrMatrix(1, 2, {0, 1}, {0, 1}, {1.0f, 1.0f}), FormatError);      // row_ptr[m] != nnz
}

TEST(CsrRoundTrip, RandomDenseWithZerosIsExact) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> dim(1, 20);
  std::bernoulli_distribution zero(0.6);
  std::normal_distribution<float> g;
  for (int trial = 0; trial < 200; ++trial) {
    DenseMatrix d(dim(rng), dim(rng));
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = zero(rng) ? 0.0f : g(rng);
    EXPECT_EQ(csr_to_dense(csr_from_dense(d)), d);
  }
}

TEST(SparsityStats, CountsNonemptyRows) {
  const auto a = csr_from_dense(mat({{0, 0, 1}, {0, 0, 0}, {2, 3, 0}}));
  const auto s = sparsity_stats(a);
  EXPECT_EQ(s.nnz, 3);
  EXPECT_EQ(s.rows_nonempty, 2);
  EXPECT_DOUBLE_EQ(s.density, 3.0 / 9.0);
}

TEST(GenerateSynthetic, NnzMatchesRoundedTarget) {
  EXPECT_EQ(generate_synthetic(256, 256, 0.90, 7).nnz(), 6554);
  EXPECT_EQ(generate_synthetic(4, 4, 0.0, 123).nnz(), 16);
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> dim(1, 60);
  std::uniform_real_distribution<double> sp(0.0, 0.999);
  for (int trial = 0; trial < 100; ++trial) {
    const Index r = dim(rng), c = dim(rng);
    const double s = sp(rng);
    EXPECT_EQ(generate_synthetic(r, c, s, trial).nnz(), std::llround((1.0 - s) * r * c));
  }
}

TEST(GenerateSynthetic, DeterministicForSeed) {
  EXPECT_EQ(generate_synthetic(100, 100, 0.95, 1), generate_synthetic(100, 100, 0.95, 1));
  EXPECT_FALSE(generate_synthetic(100, 100, 0.95, 1) == generate_synthetic(100, 100, 0.95, 2));
}

TEST(GenerateSynthetic, KeepsLargestMagnitudeDraws) {
  // Independent replay of the seeded draws: every survivor must be at least
  // as large in magnitude as every dropped draw.
  const Index rows = 40, cols = 30;
  const auto a = generate_synthetic(rows, cols, 0.8, 99);
  std::mt19937_64 rng(99);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  DenseMatrix draws(rows, cols);
  for (Eigen::Index i = 0; i < draws.size(); ++i) {
    float v;
    do v = gauss(rng);
    while (v == 0.0f);
    draws.data()[i] = v;
  }
  const DenseMatrix kept = csr_to_dense(a);
  float min_kept = INFINITY, max_dropped = 0;
  for (Eigen::Index i = 0; i < draws.size(); ++i) {
    if (kept.data()[i] != 0.0f) {
      EXPECT_EQ(kept.data()[i], draws.data()[i]);
      min_kept = std::min(min_kept, std::abs(draws.data()[i]));
    } else {
      max_dropped = std::max(max_dropped, std::abs(draws.data()[i]));
    }
  }
  EXPECT_GE(min_kept, max_dropped);
}

TEST(GenerateSynthetic, RejectsBadSparsity) {
  EXPECT_THROW(generate_synthetic(4, 4, 1.0, 0), ConfigError);
  EXPECT_THROW(generate_synthetic(4, 4, -0.1, 0), ConfigError);
}

TEST(DenseOracle, Examples) {
  const DenseMatrix b = mat({{1, 2}, {3, 4}});
  EXPECT_EQ(dense_matmul_oracle(DenseMatrix::Identity(2, 2), b), b);
  EXPECT_EQ(dense_matmul_oracle(DenseMatrix::Zero(2, 2), b), DenseMatrix::Zero(2, 2));
  EXPECT_EQ(dense_matmul_oracle(mat({{0, 2}, {3, 0}}), mat({{1, 1}, {1, 1}})), mat({{2, 2}, {3, 3}}));
  EXPECT_THROW(dense_matmul_oracle(DenseMatrix::Zero(2, 3), b), DimensionError);
}

TEST(DenseOracle, IdentityIsNeutral) {
  const DenseMatrix a = random_dense(7, 5, 1);
  EXPECT_EQ(dense_matmul_oracle(a, DenseMatrix::Identity(5, 5)), a);
  EXPECT_EQ(dense_matmul_oracle(DenseMatrix::Identity(7, 7), a), a);
}

TEST(DenseOracle, AgreesWithEigenProductInDouble) {
  const DenseMatrix a = random_dense(13, 17, 2);
  const DenseMatrix b = random_dense(17, 9, 3);
  const Eigen::MatrixXd ref = a.cast<double>() * b.cast<double>();
  const DenseMatrix oracle = dense_matmul_oracle(a, b);
  EXPECT_TRUE(oracle.cast<double>().isApprox(ref, 1e-6));
}

TEST(Baselines, CsrSpmmMatchesDenseF32WithinTolerance) {
  const auto a = generate_synthetic(64, 48, 0.7, 5);
  const DenseMatrix b = random_dense(48, 20, 6);
  const auto oracle = oracle_product(csr_to_dense(a), b);
  DenseMatrix dense;
  dense_matmul_f32(csr_to_dense(a), b, dense);
  EXPECT_TRUE(compare_scaled(csr_spmm(a, b), oracle.value, oracle.magnitude).passed);
  EXPECT_TRUE(compare_scaled(dense, oracle.value, oracle.magnitude).passed);
}

TEST(MatrixFile, IdentityTextLayout) {
  std::ostringstream out;
  write_matrix(CsrMatrix::identity(2), out, MatrixFileFormat::Text);
  EXPECT_EQ(out.str(), "2 2 2\n0 1 2\n0 1\n1 1\n");
  std::istringstream in(out.str());
  EXPECT_EQ(read_matrix(in, MatrixFileFormat::Text), CsrMatrix::identity(2));
}

TEST(MatrixFile, EmptyMatrixLayout) {
  std::ostringstream out;
  write_matrix(CsrMatrix(2, 3, {0, 0, 0}, {}, {}), out, MatrixFileFormat::Text);
  EXPECT_EQ(out.str(), "2 3 0\n0 0 0\n\n\n");
  std::istringstream in(out.str());
  EXPECT_EQ(read_matrix(in, MatrixFileFormat::Text).nnz(), 0);
}

TEST(MatrixFile, RejectsMalformedInput) {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return read_matrix(in, MatrixFileFormat::Text);
  };
  EXPECT_THROW(parse("2 2 2\n0 1 1\n0 1\n1 1\n"), FormatError);   // row_ptr[m] != nnz
  EXPECT_THROW(parse("2 2\n0 1 2\n0 1\n1 1\n"), FormatError);     // short header
  EXPECT_THROW(parse("2 2 x\n0 1 2\n0 1\n1 1\n"), FormatError);   // non-numeric header
  EXPECT_THROW(parse("2 2 2\n0 1 2\n0 5\n1 1\n"), FormatError);   // index out of bounds
  EXPECT_THROW(parse("2 2 2\n0 1 2\n0 1\n1\n"), FormatError);     // value count
  EXPECT_THROW(parse("2 2 2\n0 1 2\n0 1\n"), FormatError);        // truncated
  EXPECT_THROW(parse("2 2 2\n0 1 2\n0 1\n1 0\n"), FormatError);   // explicit zero
}

TEST(MatrixFile, RoundTripIsBitExactTextAndBinary) {
  const auto a = generate_synthetic(512, 512, 0.9, 42);
  for (const char* name : {"rt.mtx", "rt.bin"}) {
    const auto path = temp_path(name);
    write_matrix_file(a, path);
    EXPECT_EQ(read_matrix_file(path), a) << name;
    std::filesystem::remove(path);
  }
}

TEST(MatrixFile, BinaryVariantSharesTextHeader) {
  const auto path = temp_path("hdr.bin");
  write_matrix_file(CsrMatrix::identity(2), path);
  std::ifstream in(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(bytes.substr(0, 16), "2 2 2\n0 1 2\n0 1\n");
  EXPECT_EQ(bytes.size(), 16u + 2 * sizeof(float));
  std::filesystem::remove(path);
}

TEST(MatrixFile, MissingFileIsFileError) {
  EXPECT_THROW(read_matrix_file("/nonexistent/dir/m.mtx"), FileError);
}

TEST(MatrixFile, ShortestFloatTextRoundTrips) {
  std::mt19937 rng(8);
  std::uniform_int_distribution<std::uint32_t> bits;
  for (int i = 0; i < 10000; ++i) {
    std::uint32_t u = bits(rng);
    float f;
    std::memcpy(&f, &u, sizeof f);
    if (!std::isfinite(f)) continue;
    const std::string s = format_float(f);
    float back = 0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    EXPECT_EQ(std::memcmp(&f, &back, sizeof f), 0) << s;
  }
}

}  // namespace
}  // namespace sparsekit
