// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparsekit/backend.hpp"

#include <map>
#include <mutex>

namespace sparsekit {

ExecutableKernel::ExecutableKernel(std::shared_ptr<const KernelProgram> program)
    : program_(std::move(program)) {
  validate_program(*program_);
  segments_ = index_segments(*program_);
}

void ExecutableKernel::run(const BOperand& b, Eigen::Ref<DenseMatrix> c, RowTileRange tiles,
                           const Epilogue* epilogue) const {
  const KernelProgram& p = *program_;
  if (b.rows() != p.n) {
    throw DimensionError("kernel: B has " + std::to_string(b.rows()) + " rows, expected " + std::to_string(p.n));
  }
  if (c.rows() != p.m || c.cols() != b.cols()) {
    throw DimensionError("kernel: C is " + std::to_string(c.rows()) + "x" + std::to_string(c.cols()) +
                         ", expected " + std::to_string(p.m) + "x" + std::to_string(b.cols()));
  }
  if (tiles.begin < 0 || tiles.end > row_tiles() || tiles.begin > tiles.end) {
    throw DimensionError("kernel: row tile range out of bounds");
  }
  if (tiles.begin == tiles.end || b.cols() == 0) return;
  run_tiles(b, c, tiles, epilogue);
}

DenseMatrix ExecutableKernel::operator()(const DenseMatrix& b) const {
  DenseMatrix c(program_->m, b.cols());
  run(DenseOperand(b), c);
  return c;
}

// ---------------------------------------------------------------------------
// Reference backend: one instruction at a time, lane by lane.

void interpret_tiles(const KernelProgram& p, std::span<const Segment> segments, const BOperand& b,
                     Eigen::Ref<DenseMatrix> c, RowTileRange tiles, const Epilogue* epilogue) {
  const MicrokernelConfig& cfg = p.config;
  const int vw = cfg.vector_width;
  const int tr = cfg.tile_rows;
  const int tv = cfg.tile_vcols;
  const Index row_tiles = p.row_tiles();
  const ColumnTiling tiling = column_tiling(static_cast<Index>(b.cols()), cfg);

  std::vector<float> regs(static_cast<std::size_t>(p.register_budget) * static_cast<std::size_t>(vw), 0.0f);
  std::vector<float> row_buf(static_cast<std::size_t>(tiling.tile_width));
  auto reg = [&](int r) { return regs.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(vw); };

  for (Index ct = 0; ct < tiling.tiles; ++ct) {
    const Index col0 = ct * tiling.tile_width;
    const Index width = ct + 1 == tiling.tiles ? tiling.tail_width : tiling.tile_width;
    for (int kt = 0; kt < cfg.k_split; ++kt) {
      for (Index rt = tiles.begin; rt < tiles.end; ++rt) {
        const Segment& seg = segments[static_cast<std::size_t>(kt) * static_cast<std::size_t>(row_tiles) +
                                      static_cast<std::size_t>(rt)];
        for (std::size_t i = seg.begin; i < seg.end; ++i) {
          const KernelInstr& ins = p.instrs[i];
          switch (ins.op) {
            case Opcode::InitAcc:
              std::fill(reg(ins.r0), reg(ins.r0 + tr * tv), 0.0f);
              break;
            case Opcode::LoadAcc:
            case Opcode::StoreAcc: {
              const bool load = ins.op == Opcode::LoadAcc;
              const bool apply = !load && ins.is_final_store() && epilogue != nullptr;
              for (int r = 0; r < tr; ++r) {
                const Index row = ins.index * tr + r;
                for (int v = 0; v < tv; ++v) {
                  float* lane = reg(ins.r0 + r * tv + v);
                  for (int l = 0; l < vw; ++l) {
                    const Index col = v * vw + l;
                    const bool inside = row < p.m && col < width;
                    if (load) {
                      lane[l] = inside ? c(row, col0 + col) : 0.0f;
                    } else if (inside) {
                      c(row, col0 + col) = apply ? apply_epilogue(*epilogue, row, lane[l]) : lane[l];
                    }
                  }
                }
              }
              break;
            }
            case Opcode::LoadB:
              b.gather(ins.index, col0, width, row_buf.data());
              for (int v = 0; v < tv; ++v) {
                float* lane = reg(ins.r0 + v);
                for (int l = 0; l < vw; ++l) {
                  const Index col = v * vw + l;
                  lane[l] = col < width ? row_buf[static_cast<std::size_t>(col)] : 0.0f;
                }
              }
              break;
            case Opcode::Broadcast:
              std::fill(reg(ins.r0), reg(ins.r0 + 1), p.ordered_values[static_cast<std::size_t>(ins.index)]);
              break;
            case Opcode::Fma:
              for (int v = 0; v < tv; ++v) {
                float* acc = reg(ins.r2 + v);
                const float* a = reg(ins.r0);
                const float* bl = reg(ins.r1 + v);
                for (int l = 0; l < vw; ++l) acc[l] += a[l] * bl[l];
              }
              break;
          }
        }
      }
    }
  }
}

namespace {

class ReferenceKernel final : public ExecutableKernel {
 public:
  using ExecutableKernel::ExecutableKernel;
  std::string_view backend() const override { return kReferenceBackend; }

 protected:
  void run_tiles(const BOperand& b, Eigen::Ref<DenseMatrix> c, RowTileRange tiles,
                 const Epilogue* epilogue) const override {
    interpret_tiles(program(), segments(), b, c, tiles, epilogue);
  }
};

// ---------------------------------------------------------------------------
// Native backend. The instruction stream is flattened into column slices of
// (value, accumulator) pairs and executed with fixed-width Eigen arrays, so
// the lane loops compile to SIMD. Arithmetic and ordering match the
// reference interpreter exactly.

class NativeKernel final : public ExecutableKernel {
 public:
  explicit NativeKernel(std::shared_ptr<const KernelProgram> program) : ExecutableKernel(std::move(program)) {
    flatten();
  }
  std::string_view backend() const override { return kNativeBackend; }

 protected:
  void run_tiles(const BOperand& b, Eigen::Ref<DenseMatrix> c, RowTileRange tiles,
                 const Epilogue* epilogue) const override {
    const int tv = program().config.tile_vcols;
    switch (program().config.vector_width) {
      case 1: return dispatch_tv<1>(tv, b, c, tiles, epilogue);
      case 4: return dispatch_tv<4>(tv, b, c, tiles, epilogue);
      case 8: return dispatch_tv<8>(tv, b, c, tiles, epilogue);
      case 16: return dispatch_tv<16>(tv, b, c, tiles, epilogue);
      default: throw ConfigError("native backend: unsupported vector width");
    }
  }

 private:
  struct Slice {
    Index b_row;
    std::uint32_t nz_begin;
    std::uint32_t nz_end;
  };
  struct Nz {
    float value;
    std::uint32_t acc;
  };
  struct Seg {
    bool load_acc;
    bool final;
    std::uint32_t slice_begin;
    std::uint32_t slice_end;
  };

  void flatten() {
    const KernelProgram& p = program();
    segs_.reserve(segments().size());
    for (const Segment& s : segments()) {
      Seg seg{p.instrs[s.begin].op == Opcode::LoadAcc, p.instrs[s.end - 1].is_final_store(),
              static_cast<std::uint32_t>(slices_.size()), 0};
      int bcast_reg = -1;
      int b_reg = -1;
      float value = 0.0f;
      for (std::size_t i = s.begin + 1; i + 1 < s.end; ++i) {
        const KernelInstr& ins = p.instrs[i];
        switch (ins.op) {
          case Opcode::Broadcast:
            bcast_reg = ins.r0;
            value = p.ordered_values.at(static_cast<std::size_t>(ins.index));
            break;
          case Opcode::LoadB:
            b_reg = ins.r0;
            slices_.push_back({ins.index, static_cast<std::uint32_t>(nzs_.size()),
                               static_cast<std::uint32_t>(nzs_.size())});
            break;
          case Opcode::Fma:
            if (ins.r0 != bcast_reg || ins.r1 != b_reg || slices_.size() == seg.slice_begin) {
              throw FormatError("native backend: Fma operands do not follow Broadcast/LoadB");
            }
            nzs_.push_back({value, ins.r2});
            slices_.back().nz_end = static_cast<std::uint32_t>(nzs_.size());
            break;
          default:
            throw FormatError("native backend: unexpected instruction inside segment");
        }
      }
      seg.slice_end = static_cast<std::uint32_t>(slices_.size());
      segs_.push_back(seg);
    }
  }

  template <int VW>
  void dispatch_tv(int tv, const BOperand& b, Eigen::Ref<DenseMatrix> c, RowTileRange tiles,
                   const Epilogue* epilogue) const {
    switch (tv) {
      case 1: return execute<VW, 1>(tv, b, c, tiles, epilogue);
      case 2: return execute<VW, 2>(tv, b, c, tiles, epilogue);
      case 4: return execute<VW, 4>(tv, b, c, tiles, epilogue);
      default: return execute<VW, 0>(tv, b, c, tiles, epilogue);
    }
  }

  // TV > 0 fixes tile_vcols at compile time; TV == 0 reads it at run time.
  template <int VW, int TV>
  void execute(int tv_runtime, const BOperand& b, Eigen::Ref<DenseMatrix> c, RowTileRange tiles,
               const Epilogue* epilogue) const {
    using Vec = Eigen::Array<float, VW, 1>;
    const KernelProgram& p = program();
    const int tv = TV > 0 ? TV : tv_runtime;
    const int tr = p.config.tile_rows;
    const Index row_tiles = p.row_tiles();
    const ColumnTiling tiling = column_tiling(static_cast<Index>(b.cols()), p.config);
    const Eigen::Index ldc = c.outerStride();

    Vec acc[kMaxRegisterBudget];
    Vec breg[kMaxRegisterBudget];
    std::vector<float> staging(static_cast<std::size_t>(tiling.tile_width), 0.0f);

    for (Index ct = 0; ct < tiling.tiles; ++ct) {
      const Index col0 = ct * tiling.tile_width;
      const Index width = ct + 1 == tiling.tiles ? tiling.tail_width : tiling.tile_width;
      const bool full = width == tiling.tile_width;
      if (!full) std::fill(staging.begin(), staging.end(), 0.0f);

      for (int kt = 0; kt < p.config.k_split; ++kt) {
        for (Index rt = tiles.begin; rt < tiles.end; ++rt) {
          const Seg& seg = segs_[static_cast<std::size_t>(kt) * static_cast<std::size_t>(row_tiles) +
                                 static_cast<std::size_t>(rt)];
          const Index row0 = rt * tr;
          const int rows = static_cast<int>(std::min<Index>(tr, p.m - row0));

          for (int r = 0; r < tr; ++r) {
            for (int v = 0; v < tv; ++v) {
              Vec& a = acc[r * tv + v];
              if (!seg.load_acc || r >= rows) {
                a.setZero();
                continue;
              }
              const float* src = c.data() + (row0 + r) * ldc + col0 + v * VW;
              const Index lanes = std::min<Index>(VW, width - v * VW);
              if (lanes == VW) {
                a = Eigen::Map<const Vec>(src);
              } else {
                a.setZero();
                for (Index l = 0; l < lanes; ++l) a[l] = src[l];
              }
            }
          }

          for (std::uint32_t si = seg.slice_begin; si < seg.slice_end; ++si) {
            const Slice& slice = slices_[si];
            const float* src = full ? b.row_data(slice.b_row) : nullptr;
            if (src != nullptr) {
              src += col0;
            } else {
              b.gather(slice.b_row, col0, width, staging.data());
              src = staging.data();
            }
            for (int v = 0; v < tv; ++v) breg[v] = Eigen::Map<const Vec>(src + v * VW);
            for (std::uint32_t k = slice.nz_begin; k < slice.nz_end; ++k) {
              const Vec a = Vec::Constant(nzs_[k].value);
              Vec* dst = acc + nzs_[k].acc;
              for (int v = 0; v < tv; ++v) dst[v] += a * breg[v];
            }
          }

          const bool apply = seg.final && epilogue != nullptr && !epilogue->empty();
          for (int r = 0; r < rows; ++r) {
            const Index row = row0 + r;
            for (int v = 0; v < tv; ++v) {
              float* dst = c.data() + row * ldc + col0 + v * VW;
              const Index lanes = std::min<Index>(VW, width - v * VW);
              const Vec& a = acc[r * tv + v];
              if (apply) {
                for (Index l = 0; l < lanes; ++l) dst[l] = apply_epilogue(*epilogue, row, a[l]);
              } else if (lanes == VW) {
                Eigen::Map<Vec> out(dst);
                out = a;
              } else {
                for (Index l = 0; l < lanes; ++l) dst[l] = a[l];
              }
            }
          }
        }
      }
    }
  }

  std::vector<Seg> segs_;
  std::vector<Slice> slices_;
  std::vector<Nz> nzs_;
};

struct Registry {
  std::mutex mu;
  std::map<std::string, KernelFactory, std::less<>> factories;

  Registry() {
    factories.emplace(std::string(kReferenceBackend), [](std::shared_ptr<const KernelProgram> p) {
      return std::make_unique<ReferenceKernel>(std::move(p));
    });
    factories.emplace(std::string(kNativeBackend), [](std::shared_ptr<const KernelProgram> p) {
      return std::make_unique<NativeKernel>(std::move(p));
    });
  }
};

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

void register_backend(std::string name, KernelFactory factory) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  r.factories[std::move(name)] = std::move(factory);
}

std::vector<std::string> registered_backends() {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  std::vector<std::string> names;
  for (const auto& [name, _] : r.factories) names.push_back(name);
  return names;
}

std::shared_ptr<const ExecutableKernel> lower_kernel(std::shared_ptr<const KernelProgram> program,
                                                     std::string_view backend) {
  KernelFactory factory;
  {
    auto& r = registry();
    std::lock_guard lock(r.mu);
    auto it = r.factories.find(backend);
    if (it == r.factories.end()) throw UnknownBackendError("unknown lowering backend '" + std::string(backend) + "'");
    factory = it->second;
  }
  return factory(std::move(program));
}

std::shared_ptr<const ExecutableKernel> lower_kernel(KernelProgram program, std::string_view backend) {
  return lower_kernel(std::make_shared<const KernelProgram>(std::move(program)), backend);
}

}  // namespace sparsekit
