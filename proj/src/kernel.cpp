// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparsekit/kernel.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>

#include "sparsekit/backend.hpp"

namespace sparsekit {

std::string MicrokernelConfig::to_string() const {
  return std::to_string(tile_rows) + "x" + std::to_string(tile_vcols) + "x" + std::to_string(vector_width) +
         "/" + std::to_string(k_split);
}

MicrokernelConfig MicrokernelConfig::parse(std::string_view text) {
  MicrokernelConfig cfg;
  int* fields[] = {&cfg.tile_rows, &cfg.tile_vcols, &cfg.vector_width, &cfg.k_split};
  const char seps[] = {'x', 'x', '/', '\0'};
  const char* p = text.data();
  const char* end = p + text.size();
  for (int i = 0; i < 4; ++i) {
    auto [next, ec] = std::from_chars(p, end, *fields[i]);
    if (ec != std::errc()) throw ConfigError("malformed microkernel config '" + std::string(text) + "'");
    p = next;
    if (i < 3) {
      if (p == end || *p != seps[i]) throw ConfigError("malformed microkernel config '" + std::string(text) + "'");
      ++p;
    }
  }
  if (p != end) throw ConfigError("malformed microkernel config '" + std::string(text) + "'");
  return cfg;
}

void validate_config(const MicrokernelConfig& cfg, Index n, int register_budget) {
  const std::string name = cfg.to_string();
  if (cfg.tile_rows < 1 || cfg.tile_vcols < 1 || cfg.k_split < 1) {
    throw ConfigError("config " + name + ": tile sizes and k_split must be >= 1");
  }
  const int vw = cfg.vector_width;
  if (vw != 1 && vw != 4 && vw != 8 && vw != 16) {
    throw ConfigError("config " + name + ": vector_width must be one of 1, 4, 8, 16");
  }
  if (register_budget < 1 || register_budget > kMaxRegisterBudget) {
    throw ConfigError("register budget must lie in [1, " + std::to_string(kMaxRegisterBudget) + "]");
  }
  if (cfg.registers_required() > register_budget) {
    throw ConfigError("config " + name + " needs " + std::to_string(cfg.registers_required()) +
                      " registers, budget is " + std::to_string(register_budget));
  }
  if (n >= 1 && cfg.k_split > n) {
    throw ConfigError("config " + name + ": k_split exceeds reduction dimension " + std::to_string(n));
  }
}

bool config_is_valid(const MicrokernelConfig& cfg, Index n, int register_budget) {
  try {
    validate_config(cfg, n, register_budget);
    return true;
  } catch (const ConfigError&) {
    return false;
  }
}

std::string_view to_string(Opcode op) {
  switch (op) {
    case Opcode::InitAcc: return "InitAcc";
    case Opcode::LoadAcc: return "LoadAcc";
    case Opcode::StoreAcc: return "StoreAcc";
    case Opcode::LoadB: return "LoadB";
    case Opcode::Broadcast: return "Broadcast";
    case Opcode::Fma: return "Fma";
  }
  return "?";
}

ColumnTiling column_tiling(Index b_cols, const MicrokernelConfig& cfg) {
  ColumnTiling t;
  t.b_cols = b_cols;
  t.tile_width = cfg.tile_width();
  t.tiles = (b_cols + t.tile_width - 1) / t.tile_width;
  t.tail_width = t.tiles == 0 ? 0 : b_cols - (t.tiles - 1) * t.tile_width;
  return t;
}

KernelProgram generate_kernel(const CsrMatrix& a, Index b_cols, const MicrokernelConfig& config,
                              int register_budget) {
  if (a.rows() == 0 || a.cols() == 0) throw DimensionError("generate_kernel: empty matrix");
  if (b_cols < 1) throw DimensionError("generate_kernel: b_cols must be >= 1");
  validate_config(config, a.cols(), register_budget);

  KernelProgram p;
  p.config = config;
  p.register_budget = register_budget;
  p.m = a.rows();
  p.n = a.cols();
  p.b_cols = b_cols;
  p.ordered_values.reserve(static_cast<std::size_t>(a.nnz()));
  p.slot_of_csr.assign(static_cast<std::size_t>(a.nnz()), -1);

  const int tr = config.tile_rows;
  const int tv = config.tile_vcols;
  const int acc_base = 0;
  const int b_base = tr * tv;
  const int bcast = tr * tv + tv;

  struct Entry {
    Index col;
    int row_offset;
    Index csr_pos;
  };
  std::vector<Entry> entries;
  // Per-row cursor into the CSR row, advanced monotonically across k tiles.
  std::vector<Index> cursor(a.row_ptr().begin(), a.row_ptr().end() - 1);
  const auto col_idx = a.col_idx();
  const auto values = a.values();

  const Index row_tiles = p.row_tiles();
  for (int kt = 0; kt < config.k_split; ++kt) {
    const Index k_end = p.k_begin(kt + 1);
    const bool last_k = kt + 1 == config.k_split;
    for (Index rt = 0; rt < row_tiles; ++rt) {
      const Index r0 = rt * tr;
      const Index r1 = std::min<Index>(r0 + tr, p.m);
      entries.clear();
      for (Index r = r0; r < r1; ++r) {
        Index& k = cursor[r];
        const Index row_end = a.row_ptr()[r + 1];
        for (; k < row_end && col_idx[k] < k_end; ++k) {
          entries.push_back({col_idx[k], static_cast<int>(r - r0), k});
        }
      }
      std::sort(entries.begin(), entries.end(), [](const Entry& x, const Entry& y) {
        return x.col != y.col ? x.col < y.col : x.row_offset < y.row_offset;
      });

      p.instrs.push_back(kt == 0 ? KernelInstr::init_acc(acc_base) : KernelInstr::load_acc(rt, acc_base));
      Index loaded_col = -1;
      for (const Entry& e : entries) {
        const auto slot = static_cast<Index>(p.ordered_values.size());
        p.ordered_values.push_back(values[e.csr_pos]);
        p.slot_of_csr[e.csr_pos] = slot;
        p.instrs.push_back(KernelInstr::broadcast(slot, bcast));
        if (e.col != loaded_col) {
          p.instrs.push_back(KernelInstr::load_b(e.col, b_base));
          loaded_col = e.col;
        }
        p.instrs.push_back(KernelInstr::fma(bcast, b_base, acc_base + e.row_offset * tv));
      }
      p.instrs.push_back(KernelInstr::store_acc(rt, acc_base, last_k));
    }
  }
  return p;
}

std::vector<Segment> index_segments(const KernelProgram& p) {
  std::vector<Segment> segs;
  const Index row_tiles = p.row_tiles();
  segs.reserve(static_cast<std::size_t>(row_tiles) * static_cast<std::size_t>(p.config.k_split));
  std::size_t i = 0;
  for (int kt = 0; kt < p.config.k_split; ++kt) {
    for (Index rt = 0; rt < row_tiles; ++rt) {
      if (i >= p.instrs.size()) throw FormatError("kernel program truncated");
      const KernelInstr& head = p.instrs[i];
      const bool ok_head = kt == 0 ? head.op == Opcode::InitAcc : (head.op == Opcode::LoadAcc && head.index == rt);
      if (!ok_head) throw FormatError("kernel program: malformed segment head at instruction " + std::to_string(i));
      Segment s{kt, rt, i, 0};
      ++i;
      while (i < p.instrs.size() && p.instrs[i].op != Opcode::StoreAcc) {
        const Opcode op = p.instrs[i].op;
        if (op != Opcode::LoadB && op != Opcode::Broadcast && op != Opcode::Fma) {
          throw FormatError("kernel program: unexpected " + std::string(to_string(op)) + " inside segment");
        }
        ++i;
      }
      if (i >= p.instrs.size() || p.instrs[i].index != rt ||
          p.instrs[i].is_final_store() != (kt + 1 == p.config.k_split)) {
        throw FormatError("kernel program: malformed segment tail at instruction " + std::to_string(i));
      }
      ++i;
      s.end = i;
      segs.push_back(s);
    }
  }
  if (i != p.instrs.size()) throw FormatError("kernel program: trailing instructions");
  return segs;
}

InstrCounts static_counts(const KernelProgram& p) {
  InstrCounts c;
  for (const auto& ins : p.instrs) {
    switch (ins.op) {
      case Opcode::InitAcc: ++c.init_acc; break;
      case Opcode::LoadAcc: ++c.load_acc; break;
      case Opcode::StoreAcc: ++c.store_acc; break;
      case Opcode::LoadB: ++c.load_b; break;
      case Opcode::Broadcast: ++c.broadcast; break;
      case Opcode::Fma: ++c.fma; break;
    }
  }
  return c;
}

InstrCounts executed_counts(const KernelProgram& p, Index b_cols) {
  const std::int64_t t = column_tiling(b_cols, p.config).tiles;
  InstrCounts c = static_counts(p);
  c.init_acc *= t;
  c.load_acc *= t;
  c.store_acc *= t;
  c.load_b *= t;
  c.broadcast *= t;
  c.fma *= t;
  return c;
}

bool broadcasts_sequential(const KernelProgram& p) {
  std::int64_t last = -1;
  for (const auto& ins : p.instrs) {
    if (ins.op != Opcode::Broadcast) continue;
    if (ins.index <= last) return false;
    last = ins.index;
  }
  return true;
}

int max_register_referenced(const KernelProgram& p) {
  const int tr = p.config.tile_rows;
  const int tv = p.config.tile_vcols;
  int hi = -1;
  for (const auto& ins : p.instrs) {
    switch (ins.op) {
      case Opcode::InitAcc:
      case Opcode::LoadAcc:
      case Opcode::StoreAcc: hi = std::max(hi, ins.r0 + tr * tv - 1); break;
      case Opcode::LoadB: hi = std::max(hi, ins.r0 + tv - 1); break;
      case Opcode::Broadcast: hi = std::max<int>(hi, ins.r0); break;
      case Opcode::Fma: hi = std::max({hi, int(ins.r0), ins.r1 + tv - 1, ins.r2 + tv - 1}); break;
    }
  }
  return hi;
}

void validate_program(const KernelProgram& p) {
  if (p.m < 1 || p.n < 1) throw FormatError("kernel program: empty dimensions");
  validate_config(p.config, p.n, p.register_budget);
  if (p.slot_of_csr.size() != p.ordered_values.size()) {
    throw FormatError("kernel program: slot map length differs from value count");
  }
  std::vector<char> seen(p.ordered_values.size(), 0);
  for (Index s : p.slot_of_csr) {
    if (s < 0 || static_cast<std::size_t>(s) >= seen.size() || seen[static_cast<std::size_t>(s)]) {
      throw FormatError("kernel program: slot map is not a bijection");
    }
    seen[static_cast<std::size_t>(s)] = 1;
  }
  if (max_register_referenced(p) >= p.register_budget) {
    throw FormatError("kernel program: register index beyond budget");
  }
  for (const auto& ins : p.instrs) {
    if (ins.op == Opcode::Broadcast && (ins.index < 0 || ins.index >= p.nnz())) {
      throw FormatError("kernel program: value slot out of range");
    }
    if (ins.op == Opcode::LoadB && (ins.index < 0 || ins.index >= p.n)) {
      throw FormatError("kernel program: B row out of range");
    }
    const bool acc_op = ins.op == Opcode::InitAcc || ins.op == Opcode::LoadAcc || ins.op == Opcode::StoreAcc;
    if (acc_op && ins.r0 != 0) throw FormatError("kernel program: accumulator block must start at register 0");
  }
  index_segments(p);
}

std::vector<float> csr_values_from_ordered(const KernelProgram& p) {
  std::vector<float> out(p.slot_of_csr.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = p.ordered_values[static_cast<std::size_t>(p.slot_of_csr[i])];
  return out;
}

DenseMatrix execute_kernel(const KernelProgram& p, const DenseMatrix& b) {
  if (b.rows() != p.n) {
    throw DimensionError("execute_kernel: B has " + std::to_string(b.rows()) + " rows, kernel expects " +
                         std::to_string(p.n));
  }
  const auto segs = index_segments(p);
  DenseMatrix c(p.m, b.cols());
  interpret_tiles(p, segs, DenseOperand(b), c, {0, p.row_tiles()}, nullptr);
  return c;
}

}  // namespace sparsekit

namespace sparsekit {

CsrMatrix decode_matrix(const KernelProgram& p) {
  validate_program(p);
  const int tv = p.config.tile_vcols;
  struct Entry {
    Index row, col;
    float value;
  };
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(p.nnz()));
  for (const Segment& seg : index_segments(p)) {
    Index b_row = -1, slot = -1;
    for (std::size_t i = seg.begin; i < seg.end; ++i) {
      const KernelInstr& ins = p.instrs[i];
      if (ins.op == Opcode::LoadB) b_row = ins.index;
      if (ins.op == Opcode::Broadcast) slot = ins.index;
      if (ins.op == Opcode::Fma) {
        if (b_row < 0 || slot < 0) throw FormatError("fma before its operands are loaded");
        const Index row = seg.row_tile * p.config.tile_rows + ins.r2 / tv;
        entries.push_back({row, b_row, p.ordered_values[static_cast<std::size_t>(slot)]});
      }
    }
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
  std::vector<Index> ptr(static_cast<std::size_t>(p.m) + 1, 0), idx;
  std::vector<float> val;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (k > 0 && entries[k].row == entries[k - 1].row && entries[k].col == entries[k - 1].col) {
      throw FormatError("program multiplies the same A entry twice");
    }
    ++ptr[static_cast<std::size_t>(entries[k].row) + 1];
    idx.push_back(entries[k].col);
    val.push_back(entries[k].value);
  }
  for (std::size_t r = 0; r < static_cast<std::size_t>(p.m); ++r) ptr[r + 1] += ptr[r];
  return CsrMatrix(p.m, p.n, std::move(ptr), std::move(idx), std::move(val));
}

}  // namespace sparsekit
