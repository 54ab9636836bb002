// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sparsekit/conv.hpp"
#include "sparsekit/elementwise.hpp"
#include "sparsekit/tensor.hpp"
#include "sparsekit/tolerance.hpp"

namespace sparsekit {

enum class LayerKind { SparseMatmul, SparseConv, Elementwise, DenseFallback };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

/// Activations are 2-D: features x columns for matmul layers, channels x
/// pixels for conv layers.
struct Shape {
  Index rows = 0;
  Index cols = 0;
  bool operator==(const Shape&) const = default;
  std::size_t bytes() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * sizeof(float); }
};

struct Layer {
  std::string id;
  LayerKind kind = LayerKind::SparseMatmul;
  std::vector<std::string> inputs;
  std::string output;

  CsrMatrix weight;        // SparseMatmul: out x in. SparseConv: flattened filters.
  ConvSpec conv;           // SparseConv only.
  DenseMatrix dense;       // DenseFallback: out x in.
  EpilogueOp op;           // Elementwise only.
  Epilogue epilogue;       // Applied after the main op (filled by fusion).

  bool is_compute() const { return kind != LayerKind::Elementwise; }
};

/// A DAG of layers in topological order with one input and one output.
struct LayerGraph {
  std::string input;
  Shape input_shape;
  std::string output;
  std::vector<Layer> layers;

  /// Throws GraphError naming the offending layer and activation.
  std::map<std::string, Shape> infer_shapes() const;
  void validate() const { infer_shapes(); }

  /// Number of layers reading `activation`, plus one if it is the graph output.
  int use_count(const std::string& activation) const;
  std::vector<std::size_t> consumers(const std::string& activation) const;
  std::optional<std::size_t> producer(const std::string& activation) const;
};

enum class Accumulation { Float32, Float64 };

/// Straightforward layer-by-layer evaluation with private buffers. Float32
/// uses the in-repo baselines; Float64 accumulates every product in double.
DenseMatrix run_reference(const LayerGraph& g, const DenseMatrix& input, Accumulation acc = Accumulation::Float32);

/// Float64 output plus a per-element magnitude: the same network evaluated
/// on |input|, |weights| and |params| with relu/gelu as identity.
OracleProduct run_oracle(const LayerGraph& g, const DenseMatrix& input);

/// Element passes when |actual - exact| <= tol.rel * magnitude + tol.abs.
Comparison compare_to_oracle(const LayerGraph& g, const DenseMatrix& input, const DenseMatrix& actual,
                             Tolerance tol = {1e-6, 1e-7});

// Weight permutation.

/// order[i] = source index placed at position i.
struct Permutation {
  std::vector<Index> order;
  Index size() const { return static_cast<Index>(order.size()); }
  bool is_bijection() const;
  Permutation inverse() const;
  static Permutation identity(Index n);
  bool operator==(const Permutation&) const = default;
};

/// Greedy overlap ordering: start from the row with most nonzeros, then
/// repeatedly take the unused row sharing the most columns with the last
/// one. Ties go to the lowest row index.
Permutation permute_rows_greedy(const CsrMatrix& a);

/// Row i of the result is row order[i] of a.
CsrMatrix apply_row_permutation(const CsrMatrix& a, const Permutation& p);
/// Column order[i] of a becomes column i. Pairs with the row version so that
/// col(W2, p) * row(W1, p) == W2 * W1.
CsrMatrix apply_col_permutation(const CsrMatrix& a, const Permutation& p);
/// Permutes a per-channel parameter vector the same way as rows.
std::vector<float> apply_permutation(std::span<const float> v, const Permutation& p);

struct PermutationReport {
  struct Chain {
    std::string producer;
    std::string consumer;
    std::vector<std::string> through;
  };
  std::vector<Chain> applied;
  std::vector<std::string> skipped;  // producers whose chain was rejected, with reason
};

/// Reorders rows of each sparse matmul whose output flows only through
/// per-channel elementwise layers into exactly one other sparse matmul, and
/// offsets the reorder in that consumer's columns.
LayerGraph propagate_permutations(const LayerGraph& g, PermutationReport* report = nullptr);

/// Merges unary elementwise layers into the epilogue of the compute layer
/// feeding them.
LayerGraph fuse_elementwise(const LayerGraph& g);

// Buffer planning.

struct BufferPlan {
  std::map<std::string, int> assignment;
  std::vector<std::size_t> arena_bytes;
  int arena_count() const { return static_cast<int>(arena_bytes.size()); }
};

/// Live range of each activation in layer steps. The graph input is born at
/// step -1; the graph output lives through the last step.
std::map<std::string, std::pair<int, int>> live_ranges(const LayerGraph& g);

/// First-fit assignment of activations to arenas with disjoint live ranges.
BufferPlan plan_buffers(const LayerGraph& g);

/// One arena per activation.
BufferPlan private_buffers(const LayerGraph& g);

// Graph files (JSON). Weight paths are relative to the graph file.

LayerGraph load_graph(const std::filesystem::path& path);
/// Writes `<dir>/<stem>.json` plus one weight file per layer.
std::filesystem::path save_graph(const LayerGraph& g, const std::filesystem::path& dir,
                                 const std::string& stem = "graph");

// Toy networks.

struct MlpOptions {
  Index width = 512;
  int layers = 3;
  double sparsity = 0.9;
  Index batch = 1;
  bool bias = true;
  bool relu = true;
  std::uint64_t seed = 1;
};

/// Stack of sparse matmuls with bias_add + relu between layers and a final
/// bias_add.
LayerGraph make_mlp(const MlpOptions& opts);

}  // namespace sparsekit
