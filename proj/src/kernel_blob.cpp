// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparsekit/kernel_blob.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace sparsekit {

static_assert(std::endian::native == std::endian::little, "kernel blobs assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'P', 'K', 'N'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    out_.append(bytes, sizeof(T));
  }
  void raw(const void* data, std::size_t n) { out_.append(static_cast<const char*>(data), n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  template <typename T>
  T get() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  void raw(void* dst, std::size_t n) {
    if (in_.size() - pos_ < n) throw FormatError("kernel blob truncated");
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_kernel(const KernelProgram& p) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kKernelBlobVersion);
  for (int v : {p.config.tile_rows, p.config.tile_vcols, p.config.vector_width, p.config.k_split,
                p.register_budget}) {
    w.put<std::int32_t>(v);
  }
  w.put<std::int32_t>(p.m);
  w.put<std::int32_t>(p.n);
  w.put<std::int32_t>(p.b_cols);
  w.put<std::uint64_t>(p.instrs.size());
  for (const auto& ins : p.instrs) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(ins.op));
    w.put<std::uint8_t>(ins.r0);
    w.put<std::uint8_t>(ins.r1);
    w.put<std::uint8_t>(ins.r2);
    w.put<std::int32_t>(ins.index);
  }
  w.put<std::uint64_t>(p.ordered_values.size());
  w.raw(p.ordered_values.data(), p.ordered_values.size() * sizeof(float));
  w.raw(p.slot_of_csr.data(), p.slot_of_csr.size() * sizeof(Index));
  return w.take();
}

KernelProgram deserialize_kernel(std::string_view blob) {
  Reader r(blob);
  char magic[4];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(magic)) != 0) throw FormatError("kernel blob: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kKernelBlobVersion) {
    throw FormatError("kernel blob: unsupported version " + std::to_string(version));
  }
  KernelProgram p;
  p.config.tile_rows = r.get<std::int32_t>();
  p.config.tile_vcols = r.get<std::int32_t>();
  p.config.vector_width = r.get<std::int32_t>();
  p.config.k_split = r.get<std::int32_t>();
  p.register_budget = r.get<std::int32_t>();
  p.m = r.get<std::int32_t>();
  p.n = r.get<std::int32_t>();
  p.b_cols = r.get<std::int32_t>();

  const auto count = r.get<std::uint64_t>();
  if (count > blob.size() / 8) throw FormatError("kernel blob: instruction count exceeds blob size");
  p.instrs.resize(count);
  for (auto& ins : p.instrs) {
    const auto op = r.get<std::uint8_t>();
    if (op > static_cast<std::uint8_t>(Opcode::Fma)) throw FormatError("kernel blob: unknown opcode");
    ins.op = static_cast<Opcode>(op);
    ins.r0 = r.get<std::uint8_t>();
    ins.r1 = r.get<std::uint8_t>();
    ins.r2 = r.get<std::uint8_t>();
    ins.index = r.get<std::int32_t>();
  }
  const auto nnz = r.get<std::uint64_t>();
  if (nnz > blob.size() / 8) throw FormatError("kernel blob: value count exceeds blob size");
  p.ordered_values.resize(nnz);
  r.raw(p.ordered_values.data(), nnz * sizeof(float));
  p.slot_of_csr.resize(nnz);
  r.raw(p.slot_of_csr.data(), nnz * sizeof(Index));
  if (!r.done()) throw FormatError("kernel blob: trailing bytes");
  validate_program(p);
  return p;
}

void save_kernel(const KernelProgram& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write kernel file " + path.string());
  const std::string blob = serialize_kernel(p);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw FileError("write failed for " + path.string());
}

KernelProgram load_kernel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open kernel file " + path.string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize_kernel(blob);
  } catch (const Error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace sparsekit
