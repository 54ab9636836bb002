// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <numeric>

#include "sparsekit/graph.hpp"

namespace sparsekit {

bool Permutation::is_bijection() const {
  std::vector<char> seen(order.size(), 0);
  for (Index i : order) {
    if (i < 0 || i >= size() || seen[static_cast<std::size_t>(i)]) return false;
    seen[static_cast<std::size_t>(i)] = 1;
  }
  return true;
}

Permutation Permutation::inverse() const {
  Permutation inv{std::vector<Index>(order.size())};
  for (Index i = 0; i < size(); ++i) inv.order[static_cast<std::size_t>(order[i])] = i;
  return inv;
}

Permutation Permutation::identity(Index n) {
  Permutation p{std::vector<Index>(static_cast<std::size_t>(n))};
  std::iota(p.order.begin(), p.order.end(), 0);
  return p;
}

Permutation permute_rows_greedy(const CsrMatrix& a) {
  const Index m = a.rows();
  if (m < 1) throw DimensionError("permute_rows_greedy: matrix has no rows");

  // Column -> rows index so each step only touches rows sharing a column.
  std::vector<Index> col_ptr(static_cast<std::size_t>(a.cols()) + 1, 0);
  for (Index c : a.col_idx()) ++col_ptr[static_cast<std::size_t>(c) + 1];
  std::partial_sum(col_ptr.begin(), col_ptr.end(), col_ptr.begin());
  std::vector<Index> col_rows(static_cast<std::size_t>(a.nnz()));
  {
    std::vector<Index> fill(col_ptr.begin(), col_ptr.end() - 1);
    for (Index r = 0; r < m; ++r)
      for (Index c : a.row_cols(r)) col_rows[static_cast<std::size_t>(fill[static_cast<std::size_t>(c)]++)] = r;
  }

  std::vector<char> used(static_cast<std::size_t>(m), 0);
  std::vector<Index> overlap(static_cast<std::size_t>(m), 0);
  Permutation p;
  p.order.reserve(static_cast<std::size_t>(m));

  Index current = 0;
  for (Index r = 1; r < m; ++r)
    if (a.row_nnz(r) > a.row_nnz(current)) current = r;

  while (true) {
    used[static_cast<std::size_t>(current)] = 1;
    p.order.push_back(current);
    if (p.size() == m) break;
    std::vector<Index> touched;
    for (Index c : a.row_cols(current)) {
      for (Index k = col_ptr[static_cast<std::size_t>(c)]; k < col_ptr[static_cast<std::size_t>(c) + 1]; ++k) {
        const Index r = col_rows[static_cast<std::size_t>(k)];
        if (used[static_cast<std::size_t>(r)]) continue;
        if (overlap[static_cast<std::size_t>(r)]++ == 0) touched.push_back(r);
      }
    }
    Index best = -1, best_overlap = 0;
    for (Index r : touched) {
      const Index o = overlap[static_cast<std::size_t>(r)];
      if (o > best_overlap || (o == best_overlap && r < best)) {
        best = r;
        best_overlap = o;
      }
      overlap[static_cast<std::size_t>(r)] = 0;
    }
    if (best < 0) {
      // Nothing overlaps: the lowest unused row (overlap 0 for all).
      best = static_cast<Index>(std::find(used.begin(), used.end(), 0) - used.begin());
    }
    current = best;
  }
  return p;
}

namespace {

void check_length(const Permutation& p, Index n, const char* what) {
  if (p.size() != n) {
    throw DimensionError(std::string(what) + ": permutation length " + std::to_string(p.size()) +
                         " does not match dimension " + std::to_string(n));
  }
  if (!p.is_bijection()) throw DimensionError(std::string(what) + ": order is not a permutation");
}

}  // namespace

CsrMatrix apply_row_permutation(const CsrMatrix& a, const Permutation& p) {
  check_length(p, a.rows(), "apply_row_permutation");
  std::vector<Index> ptr{0}, idx;
  std::vector<float> val;
  idx.reserve(static_cast<std::size_t>(a.nnz()));
  val.reserve(static_cast<std::size_t>(a.nnz()));
  for (Index src : p.order) {
    const auto c = a.row_cols(src);
    const auto v = a.row_values(src);
    idx.insert(idx.end(), c.begin(), c.end());
    val.insert(val.end(), v.begin(), v.end());
    ptr.push_back(static_cast<Index>(idx.size()));
  }
  return CsrMatrix(a.rows(), a.cols(), std::move(ptr), std::move(idx), std::move(val));
}

CsrMatrix apply_col_permutation(const CsrMatrix& a, const Permutation& p) {
  check_length(p, a.cols(), "apply_col_permutation");
  const Permutation where = p.inverse();  // old column -> new column
  std::vector<Index> ptr{0}, idx;
  std::vector<float> val;
  idx.reserve(static_cast<std::size_t>(a.nnz()));
  val.reserve(static_cast<std::size_t>(a.nnz()));
  std::vector<std::pair<Index, float>> row;
  for (Index r = 0; r < a.rows(); ++r) {
    row.clear();
    const auto c = a.row_cols(r);
    const auto v = a.row_values(r);
    for (std::size_t k = 0; k < c.size(); ++k) row.emplace_back(where.order[static_cast<std::size_t>(c[k])], v[k]);
    std::sort(row.begin(), row.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    for (const auto& [col, value] : row) {
      idx.push_back(col);
      val.push_back(value);
    }
    ptr.push_back(static_cast<Index>(idx.size()));
  }
  return CsrMatrix(a.rows(), a.cols(), std::move(ptr), std::move(idx), std::move(val));
}

std::vector<float> apply_permutation(std::span<const float> v, const Permutation& p) {
  check_length(p, static_cast<Index>(v.size()), "apply_permutation");
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[static_cast<std::size_t>(p.order[i])];
  return out;
}

LayerGraph propagate_permutations(const LayerGraph& in, PermutationReport* report) {
  in.validate();
  LayerGraph g = in;
  PermutationReport local;
  PermutationReport& rep = report ? *report : local;

  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    if (g.layers[i].kind != LayerKind::SparseMatmul) continue;
    const std::string& id = g.layers[i].id;

    // Walk forward collecting the chain; reject on anything not row-permutable.
    std::vector<std::size_t> through;
    std::optional<std::size_t> consumer;
    std::string reason;
    std::string act = g.layers[i].output;
    while (true) {
      if (act == g.output) {
        reason = "feeds the graph output";
        break;
      }
      const auto cons = g.consumers(act);
      if (cons.size() != 1) {
        reason = "activation '" + act + "' has " + std::to_string(cons.size()) + " consumers";
        break;
      }
      const Layer& c = g.layers[cons[0]];
      if (c.kind == LayerKind::Elementwise && is_unary(c.op.op)) {
        through.push_back(cons[0]);
        act = c.output;
        continue;
      }
      if (c.kind == LayerKind::SparseMatmul) {
        consumer = cons[0];
      } else {
        reason = "blocked by " + std::string(to_string(c.kind)) + " layer '" + c.id + "'";
      }
      break;
    }
    if (!consumer) {
      rep.skipped.push_back(id + ": " + reason);
      continue;
    }

    Layer& producer = g.layers[i];
    const Permutation p = permute_rows_greedy(producer.weight);
    producer.weight = apply_row_permutation(producer.weight, p);
    for (auto& step : producer.epilogue)
      if (is_channelwise(step.op)) step.params = apply_permutation(step.params, p);
    PermutationReport::Chain chain{id, g.layers[*consumer].id, {}};
    for (std::size_t t : through) {
      Layer& e = g.layers[t];
      if (is_channelwise(e.op.op)) e.op.params = apply_permutation(e.op.params, p);
      chain.through.push_back(e.id);
    }
    g.layers[*consumer].weight = apply_col_permutation(g.layers[*consumer].weight, p);
    rep.applied.push_back(std::move(chain));
  }
  return g;
}

LayerGraph fuse_elementwise(const LayerGraph& in) {
  in.validate();
  LayerGraph g = in;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    if (g.layers[i].kind != LayerKind::SparseMatmul && g.layers[i].kind != LayerKind::SparseConv) continue;
    while (g.layers[i].output != g.output) {
      const auto cons = g.consumers(g.layers[i].output);
      if (cons.size() != 1) break;
      const Layer& e = g.layers[cons[0]];
      if (e.kind != LayerKind::Elementwise || !is_unary(e.op.op) || g.use_count(e.output) != 1) break;
      g.layers[i].epilogue.push_back(e.op);
      g.layers[i].output = e.output;
      g.layers.erase(g.layers.begin() + static_cast<std::ptrdiff_t>(cons[0]));
    }
  }
  return g;
}

std::map<std::string, std::pair<int, int>> live_ranges(const LayerGraph& g) {
  std::map<std::string, std::pair<int, int>> r;
  r[g.input] = {-1, -1};
  for (int i = 0; i < static_cast<int>(g.layers.size()); ++i) {
    for (const auto& a : g.layers[static_cast<std::size_t>(i)].inputs) r.at(a).second = i;
    r[g.layers[static_cast<std::size_t>(i)].output] = {i, i};
  }
  r.at(g.output).second = static_cast<int>(g.layers.size());
  return r;
}

namespace {

std::vector<std::string> definition_order(const LayerGraph& g) {
  std::vector<std::string> acts{g.input};
  for (const auto& l : g.layers) acts.push_back(l.output);
  return acts;
}

}  // namespace

BufferPlan plan_buffers(const LayerGraph& g) {
  const auto shapes = g.infer_shapes();
  const auto ranges = live_ranges(g);
  BufferPlan plan;
  std::vector<std::vector<std::pair<int, int>>> occupied;
  for (const auto& act : definition_order(g)) {
    const auto [s, e] = ranges.at(act);
    int arena = 0;
    for (; arena < plan.arena_count(); ++arena) {
      const auto& busy = occupied[static_cast<std::size_t>(arena)];
      if (std::none_of(busy.begin(), busy.end(), [&](auto r) { return s <= r.second && r.first <= e; })) break;
    }
    if (arena == plan.arena_count()) {
      plan.arena_bytes.push_back(0);
      occupied.emplace_back();
    }
    occupied[static_cast<std::size_t>(arena)].emplace_back(s, e);
    auto& bytes = plan.arena_bytes[static_cast<std::size_t>(arena)];
    bytes = std::max(bytes, shapes.at(act).bytes());
    plan.assignment[act] = arena;
  }
  return plan;
}

BufferPlan private_buffers(const LayerGraph& g) {
  const auto shapes = g.infer_shapes();
  BufferPlan plan;
  for (const auto& act : definition_order(g)) {
    plan.assignment[act] = plan.arena_count();
    plan.arena_bytes.push_back(shapes.at(act).bytes());
  }
  return plan;
}

}  // namespace sparsekit
