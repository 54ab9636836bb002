// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sstream>

#include "sparsekit/conv.hpp"
#include "sparsekit/tolerance.hpp"

namespace sparsekit {
namespace {

// Direct convolution straight from the definition, in double.
OracleProduct direct_conv(const FilterBank& f, const DenseMatrix& x, const ConvSpec& s) {
  OracleProduct r{DenseMatrix::Zero(s.out_channels, s.out_pixels()), DenseMatrix::Zero(s.out_channels, s.out_pixels())};
  for (Index oc = 0; oc < s.out_channels; ++oc) {
    for (Index oy = 0; oy < s.out_h(); ++oy) {
      for (Index ox = 0; ox < s.out_w(); ++ox) {
        double acc = 0, mag = 0;
        for (Index ic = 0; ic < s.in_channels; ++ic) {
          for (Index fy = 0; fy < s.filter_h; ++fy) {
            for (Index fx = 0; fx < s.filter_w; ++fx) {
              const Index iy = oy * s.stride + fy - s.pad, ix = ox * s.stride + fx - s.pad;
              if (iy < 0 || iy >= s.image_h || ix < 0 || ix >= s.image_w) continue;
              const double w = f(oc, ic, fy, fx), v = x(ic, iy * s.image_w + ix);
              acc += w * v;
              mag += std::abs(w * v);
            }
          }
        }
        r.value(oc, oy * s.out_w() + ox) = static_cast<float>(acc);
        r.magnitude(oc, oy * s.out_w() + ox) = static_cast<float>(mag);
      }
    }
  }
  return r;
}

ConvSpec spec3x3(Index ic, Index oc, Index h, Index w) { return {ic, oc, 3, 3, h, w, 1, 1}; }

TEST(ConvSpec, OutputDimsAndValidation) {
  const ConvSpec s{1, 1, 3, 3, 7, 9, 1, 2};
  EXPECT_EQ(s.out_h(), 4);
  EXPECT_EQ(s.out_w(), 5);
  EXPECT_NO_THROW(validate_conv_spec(s));
  EXPECT_THROW(validate_conv_spec({1, 1, 3, 3, 1, 1, 0, 1}), ConfigError);
  EXPECT_THROW(validate_conv_spec({1, 1, 3, 3, 5, 5, -1, 1}), ConfigError);
  EXPECT_THROW(validate_conv_spec({1, 1, 3, 3, 5, 5, 1, 0}), ConfigError);
}

TEST(FlattenFilters, OneByOneIsTheWeightMatrix) {
  const CsrMatrix w = generate_synthetic(5, 7, 0.5, 3);
  FilterBank f(5, 7, 1, 1);
  for (Index o = 0; o < 5; ++o)
    for (Index i = 0; i < 7; ++i) f(o, i, 0, 0) = csr_to_dense(w)(o, i);
  EXPECT_EQ(flatten_filters(f), w);
}

TEST(FlattenFilters, CenterTapColumn) {
  FilterBank f(1, 1, 3, 3);
  f(0, 0, 1, 1) = 2.5f;
  const CsrMatrix a = flatten_filters(f);
  ASSERT_EQ(a.nnz(), 1);
  EXPECT_EQ(a.col_idx()[0], 4);
  FilterBank g(2, 3, 3, 3);
  g(1, 2, 0, 2) = 1.0f;
  EXPECT_EQ(flatten_filters(g).col_idx()[0], 2 * 9 + 0 * 3 + 2);
}

TEST(FlattenFilters, AllZeroIsEmptyAndRoundTrips) {
  EXPECT_EQ(flatten_filters(FilterBank(4, 2, 3, 3)).nnz(), 0);
  const FilterBank f = generate_synthetic_filters(6, 4, 3, 3, 0.8, 1);
  EXPECT_EQ(unflatten_filters(flatten_filters(f), 4, 3, 3), f);
}

TEST(VirtualPlan, OneByOneIsIdentityGather) {
  const auto plan = build_virtual_plan({3, 1, 1, 1, 4, 5, 0, 1});
  for (Index k = 0; k < 3; ++k)
    for (Index p = 0; p < 20; ++p) EXPECT_EQ(plan.offset(k, p), k * 20 + p);
}

TEST(VirtualPlan, PaddingAndCenterTap) {
  const auto plan = build_virtual_plan(spec3x3(2, 1, 5, 5));
  EXPECT_EQ(plan.offset(0, 0), VirtualOperandPlan::kPadding);  // tap (0,0) at pixel (0,0)
  const Index interior = 2 * 5 + 3;
  EXPECT_EQ(plan.offset(4, interior), interior);               // center tap, channel 0
  EXPECT_EQ(plan.offset(9 + 4, interior), 25 + interior);      // center tap, channel 1
}

TEST(VirtualPlan, MarkersExactlyOutsideImage) {
  const ConvSpec s{2, 1, 3, 3, 6, 5, 1, 2};
  const auto plan = build_virtual_plan(s);
  DenseMatrix x = DenseMatrix::Zero(2, 30);
  for (Index i = 0; i < 60; ++i) x.data()[i] = static_cast<float>(i + 1);
  std::vector<float> row(static_cast<std::size_t>(s.out_pixels()));
  for (Index k = 0; k < s.reduction(); ++k) {
    plan.gather(x.data(), k, 0, s.out_pixels(), row.data());
    for (Index p = 0; p < s.out_pixels(); ++p) {
      const Index fy = (k % 9) / 3, fx = k % 3;
      const Index iy = (p / s.out_w()) * 2 + fy - 1, ix = (p % s.out_w()) * 2 + fx - 1;
      const bool inside = iy >= 0 && iy < 6 && ix >= 0 && ix < 5;
      const auto off = plan.offset(k, p);
      EXPECT_EQ(off == VirtualOperandPlan::kPadding, !inside);
      if (inside) {
        EXPECT_GE(off, 0);
        EXPECT_LT(off, 60);
      }
      EXPECT_EQ(row[p], inside ? x.data()[off] : 0.0f);
    }
  }
}

TEST(SparseConv, AllOnesThreeByThree) {
  FilterBank f(1, 1, 3, 3);
  for (float& v : f.data()) v = 1.0f;
  const DenseMatrix x = DenseMatrix::Ones(1, 9);
  DenseMatrix expected(1, 9);
  expected << 4, 6, 4, 6, 9, 6, 4, 6, 4;
  for (auto backend : {kReferenceBackend, kNativeBackend}) {
    EXPECT_EQ(sparse_conv(f, x, spec3x3(1, 1, 3, 3), {1, 1, 4, 1}, backend), expected);
  }
}

TEST(SparseConv, CenterTapScales) {
  FilterBank f(1, 1, 3, 3);
  f(0, 0, 1, 1) = 1.5f;
  const DenseMatrix x = random_dense(1, 6 * 7, 3);
  for (Index pad : {0, 1, 2}) {
    const ConvSpec s{1, 1, 3, 3, 6, 7, pad, 1};
    const DenseMatrix out = sparse_conv(f, x, s);
    for (Index oy = 0; oy < s.out_h(); ++oy)
      for (Index ox = 0; ox < s.out_w(); ++ox) {
        const Index iy = oy + 1 - pad, ix = ox + 1 - pad;
        const float expected = (iy >= 0 && iy < 6 && ix >= 0 && ix < 7) ? 1.5f * x(0, iy * 7 + ix) : 0.0f;
        EXPECT_EQ(out(0, oy * s.out_w() + ox), expected);
      }
  }
}

TEST(SparseConv, OneByOneMatchesExecuteKernel) {
  const FilterBank f = generate_synthetic_filters(12, 9, 1, 1, 0.7, 4);
  const DenseMatrix x = random_dense(9, 8 * 6, 5);
  const ConvSpec s{9, 12, 1, 1, 8, 6, 0, 1};
  const MicrokernelConfig cfg{2, 2, 8, 1};
  const DenseMatrix viaKernel = execute_kernel(generate_kernel(flatten_filters(f), 48, cfg), x);
  EXPECT_TRUE(bitwise_equal(sparse_conv(f, x, s, cfg), viaKernel));
}

TEST(SparseConv, MatchesDirectOracleAcrossShapes) {
  int trial = 0;
  for (const ConvSpec& s : {ConvSpec{3, 5, 3, 3, 7, 7, 1, 1}, ConvSpec{4, 6, 3, 3, 9, 5, 0, 1},
                            ConvSpec{2, 3, 3, 2, 8, 8, 2, 2}, ConvSpec{5, 8, 1, 3, 6, 11, 1, 3},
                            ConvSpec{1, 1, 5, 5, 5, 5, 2, 1}}) {
    const FilterBank f = generate_synthetic_filters(s.out_channels, s.in_channels, s.filter_h, s.filter_w, 0.5, trial);
    const DenseMatrix x = random_dense(s.in_channels, s.in_pixels(), 100 + trial);
    const auto oracle = direct_conv(f, x, s);
    for (auto backend : {kReferenceBackend, kNativeBackend}) {
      const auto cmp = compare_scaled(sparse_conv(f, x, s, {2, 1, 4, 2}, backend), oracle.value, oracle.magnitude);
      EXPECT_TRUE(cmp.passed) << trial << " " << backend << ": " << cmp.summary();
    }
    ++trial;
  }
}

TEST(SparseConv, SuitePointSixtyFourChannels) {
  const ConvSpec s = spec3x3(64, 64, 14, 14);
  const FilterBank f = generate_synthetic_filters(64, 64, 3, 3, 0.95, 11);
  const DenseMatrix x = random_dense(64, 196, 12);
  const auto oracle = direct_conv(f, x, s);
  const auto cmp = compare_scaled(sparse_conv(f, x, s, {4, 2, 8, 1}), oracle.value, oracle.magnitude);
  EXPECT_TRUE(cmp.passed) << cmp.summary();
}

TEST(SparseConv, Linearity) {
  const ConvSpec s = spec3x3(4, 6, 8, 8);
  const FilterBank f = generate_synthetic_filters(6, 4, 3, 3, 0.6, 2);
  const DenseMatrix x = random_dense(4, 64, 3), y = random_dense(4, 64, 4);
  const float alpha = 0.75f, beta = -1.25f;
  const DenseMatrix lhs = sparse_conv(f, (alpha * x + beta * y).eval(), s);
  const DenseMatrix rhs = alpha * sparse_conv(f, x, s) + beta * sparse_conv(f, y, s);
  // Scale from the magnitudes of both terms.
  FilterBank af = f;
  for (float& v : af.data()) v = std::abs(v);
  const DenseMatrix mag = std::abs(alpha) * direct_conv(af, x.cwiseAbs(), s).value +
                          std::abs(beta) * direct_conv(af, y.cwiseAbs(), s).value;
  EXPECT_TRUE(compare_scaled(lhs, rhs, mag).passed);
}

TEST(SparseConv, ShapeMismatch) {
  const FilterBank f(2, 3, 3, 3);
  EXPECT_THROW(sparse_conv(f, DenseMatrix::Zero(3, 25), spec3x3(3, 3, 5, 5)), DimensionError);
  EXPECT_THROW(sparse_conv(f, DenseMatrix::Zero(2, 25), spec3x3(3, 2, 5, 5)), DimensionError);
  EXPECT_THROW(sparse_conv(f, DenseMatrix::Zero(3, 24), spec3x3(3, 2, 5, 5)), DimensionError);
}

TEST(SparseConv, RowTileRangesCompose) {
  const ConvSpec s = spec3x3(8, 10, 6, 6);
  const SparseConv conv(s, flatten_filters(generate_synthetic_filters(10, 8, 3, 3, 0.7, 5)), {3, 1, 8, 2});
  const DenseMatrix x = random_dense(8, 36, 6);
  DenseMatrix parts(10, 36);
  conv.run(x, parts, {0, 2});
  conv.run(x, parts, {2, conv.kernel().row_tiles()});
  EXPECT_TRUE(bitwise_equal(parts, conv(x)));
}

TEST(FilterFile, RoundTripAndHeader) {
  const FilterBank f = generate_synthetic_filters(3, 2, 3, 3, 0.7, 8);
  std::stringstream ss;
  write_filters(f, ss);
  EXPECT_EQ(ss.str().rfind("conv 3 2 3 3\n", 0), 0u);
  EXPECT_EQ(read_filters(ss), f);
}

TEST(FilterFile, Malformed) {
  std::stringstream missing("2 2 0\n0 0 0\n\n\n");
  EXPECT_THROW(read_filters(missing), FormatError);
  std::stringstream mismatch("conv 1 1 3 3\n1 4 0\n0 0\n\n\n");
  EXPECT_THROW(read_filters(mismatch), FormatError);
  std::stringstream short_header("conv 1 1 3\n1 9 0\n0 0\n\n\n");
  EXPECT_THROW(read_filters(short_header), FormatError);
  EXPECT_THROW(read_filters_file("/nonexistent/f.conv"), FileError);
}

}  // namespace
}  // namespace sparsekit
