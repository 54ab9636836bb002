// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparsekit/conv.hpp"

#include <fstream>
#include <sstream>

#include "sparsekit/matrix_io.hpp"

namespace sparsekit {

void validate_conv_spec(const ConvSpec& s) {
  auto fail = [](const std::string& msg) { throw ConfigError("conv spec: " + msg); };
  if (s.in_channels < 1 || s.out_channels < 1) fail("channel counts must be >= 1");
  if (s.filter_h < 1 || s.filter_w < 1) fail("filter dims must be >= 1");
  if (s.image_h < 1 || s.image_w < 1) fail("image dims must be >= 1");
  if (s.pad < 0) fail("pad must be >= 0");
  if (s.stride < 1) fail("stride must be >= 1");
  if (s.image_h + 2 * s.pad < s.filter_h || s.image_w + 2 * s.pad < s.filter_w) {
    fail("filter larger than padded image");
  }
}

FilterBank::FilterBank(Index oc, Index ic, Index fy, Index fx) : oc_(oc), ic_(ic), fy_(fy), fx_(fx) {
  if (oc < 1 || ic < 1 || fy < 1 || fx < 1) throw DimensionError("filter bank dims must be >= 1");
  data_.assign(static_cast<std::size_t>(oc) * ic * fy * fx, 0.0f);
}

CsrMatrix flatten_filters(const FilterBank& f) {
  // Row-major OC,IC,FY,FX storage is already the flattened layout.
  const ConstDenseMap view(f.data().data(), f.out_channels(),
                           f.in_channels() * f.filter_h() * f.filter_w());
  return csr_from_dense(view);
}

FilterBank unflatten_filters(const CsrMatrix& flat, Index ic, Index fy, Index fx) {
  if (flat.cols() != ic * fy * fx) {
    throw DimensionError("flattened filter has " + std::to_string(flat.cols()) + " columns, expected " +
                         std::to_string(ic * fy * fx));
  }
  FilterBank f(flat.rows(), ic, fy, fx);
  DenseMap(f.data().data(), flat.rows(), flat.cols()) = csr_to_dense(flat);
  return f;
}

FilterBank generate_synthetic_filters(Index oc, Index ic, Index fy, Index fx, double sparsity,
                                      std::uint64_t seed) {
  return unflatten_filters(generate_synthetic(oc, ic * fy * fx, sparsity, seed), ic, fy, fx);
}

VirtualOperandPlan::VirtualOperandPlan(const ConvSpec& spec) : spec_(spec) { validate_conv_spec(spec); }

VirtualOperandPlan build_virtual_plan(const ConvSpec& spec) { return VirtualOperandPlan(spec); }

std::int64_t VirtualOperandPlan::offset(Index k, Index p) const {
  const Index taps = spec_.filter_h * spec_.filter_w;
  const Index ic = k / taps, fy = (k % taps) / spec_.filter_w, fx = k % spec_.filter_w;
  const Index ow = spec_.out_w();
  const Index iy = (p / ow) * spec_.stride + fy - spec_.pad;
  const Index ix = (p % ow) * spec_.stride + fx - spec_.pad;
  if (iy < 0 || iy >= spec_.image_h || ix < 0 || ix >= spec_.image_w) return kPadding;
  return (static_cast<std::int64_t>(ic) * spec_.image_h + iy) * spec_.image_w + ix;
}

void VirtualOperandPlan::gather(const float* input, Index k, Index p0, Index count, float* dst) const {
  const Index taps = spec_.filter_h * spec_.filter_w;
  const Index ic = k / taps, fy = (k % taps) / spec_.filter_w, fx = k % spec_.filter_w;
  const Index ow = spec_.out_w(), s = spec_.stride;
  const float* channel = input + static_cast<std::ptrdiff_t>(ic) * spec_.in_pixels();

  Index p = p0;
  const Index end = p0 + count;
  while (p < end) {
    // One output row at a time.
    const Index oy = p / ow;
    const Index ox0 = p % ow;
    const Index n = std::min(end - p, ow - ox0);
    const Index iy = oy * s + fy - spec_.pad;
    if (iy < 0 || iy >= spec_.image_h) {
      std::fill_n(dst, n, 0.0f);
    } else {
      const float* row = channel + static_cast<std::ptrdiff_t>(iy) * spec_.image_w;
      for (Index j = 0; j < n; ++j) {
        const Index ix = (ox0 + j) * s + fx - spec_.pad;
        dst[j] = (ix >= 0 && ix < spec_.image_w) ? row[ix] : 0.0f;
      }
    }
    dst += n;
    p += n;
  }
}

DenseMatrix im2col(const VirtualOperandPlan& plan, const DenseMatrix& input) {
  const ConvOperand op(plan, input);
  DenseMatrix cols(plan.rows(), plan.cols());
  for (Index k = 0; k < plan.rows(); ++k) {
    op.gather(k, 0, plan.cols(), cols.data() + static_cast<std::ptrdiff_t>(k) * plan.cols());
  }
  return cols;
}

ConvOperand::ConvOperand(const VirtualOperandPlan& plan, Eigen::Ref<const DenseMatrix> input)
    : plan_(plan), input_(input) {
  const auto& s = plan.spec();
  if (input.rows() != s.in_channels || input.cols() != s.in_pixels()) {
    throw DimensionError("conv input is " + std::to_string(input.rows()) + "x" + std::to_string(input.cols()) +
                         ", expected " + std::to_string(s.in_channels) + "x" + std::to_string(s.in_pixels()));
  }
  if (input.outerStride() != input.cols()) throw DimensionError("conv input must be contiguous");
  identity_ = s.filter_h == 1 && s.filter_w == 1 && s.pad == 0 && s.stride == 1;
}

const float* ConvOperand::row_data(Index row) const {
  return identity_ ? input_.data() + static_cast<std::ptrdiff_t>(row) * input_.cols() : nullptr;
}

void ConvOperand::gather(Index row, Index col0, Index count, float* dst) const {
  plan_.gather(input_.data(), row, col0, count, dst);
}

SparseConv::SparseConv(const ConvSpec& spec, const CsrMatrix& flat, MicrokernelConfig config,
                       std::string_view backend, int register_budget)
    : plan_(spec) {
  if (flat.rows() != spec.out_channels || flat.cols() != spec.reduction()) {
    throw DimensionError("filter matrix is " + std::to_string(flat.rows()) + "x" + std::to_string(flat.cols()) +
                         ", conv spec needs " + std::to_string(spec.out_channels) + "x" +
                         std::to_string(spec.reduction()));
  }
  kernel_ = lower_kernel(generate_kernel(flat, spec.out_pixels(), config, register_budget), backend);
}

SparseConv::SparseConv(const ConvSpec& spec, std::shared_ptr<const ExecutableKernel> kernel)
    : plan_(spec), kernel_(std::move(kernel)) {
  const auto& p = kernel_->program();
  if (p.m != spec.out_channels || p.n != spec.reduction() || p.b_cols != spec.out_pixels()) {
    throw DimensionError("kernel shape does not match conv spec");
  }
}

void SparseConv::run(Eigen::Ref<const DenseMatrix> input, Eigen::Ref<DenseMatrix> output, RowTileRange tiles,
                     const Epilogue* epilogue) const {
  kernel_->run(ConvOperand(plan_, input), output, tiles, epilogue);
}

DenseMatrix SparseConv::operator()(const DenseMatrix& input) const {
  DenseMatrix out(spec().out_channels, spec().out_pixels());
  run(input, out);
  return out;
}

DenseMatrix sparse_conv(const FilterBank& filters, const DenseMatrix& input, const ConvSpec& spec,
                        MicrokernelConfig config, std::string_view backend) {
  if (filters.out_channels() != spec.out_channels || filters.in_channels() != spec.in_channels ||
      filters.filter_h() != spec.filter_h || filters.filter_w() != spec.filter_w) {
    throw DimensionError("filter bank shape does not match conv spec");
  }
  return SparseConv(spec, flatten_filters(filters), config, backend)(input);
}

FilterBank read_filters(std::istream& in) {
  const std::string header = io_detail::read_line(in, "conv header");
  if (header.rfind("conv ", 0) != 0) throw FormatError("filter file must start with 'conv OC IC FY FX'");
  const auto dims = io_detail::parse_ints(header.substr(5), "conv header");
  if (dims.size() != 4) throw FormatError("conv header needs 4 dimensions");
  for (long long d : dims) {
    if (d < 1 || d > std::numeric_limits<Index>::max()) throw FormatError("conv header dimension out of range");
  }
  const CsrMatrix flat = read_matrix(in, MatrixFileFormat::Text);
  if (flat.rows() != dims[0] || flat.cols() != dims[1] * dims[2] * dims[3]) {
    throw FormatError("filter matrix shape disagrees with conv header");
  }
  return unflatten_filters(flat, static_cast<Index>(dims[1]), static_cast<Index>(dims[2]),
                           static_cast<Index>(dims[3]));
}

void write_filters(const FilterBank& f, std::ostream& out) {
  out << "conv " << f.out_channels() << ' ' << f.in_channels() << ' ' << f.filter_h() << ' ' << f.filter_w()
      << '\n';
  write_matrix(flatten_filters(f), out, MatrixFileFormat::Text);
}

FilterBank read_filters_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open filter file " + path.string());
  try {
    return read_filters(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_filters_file(const FilterBank& f, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FileError("cannot write filter file " + path.string());
  write_filters(f, out);
  if (!out) throw FileError("write failed for " + path.string());
}

}  // namespace sparsekit
