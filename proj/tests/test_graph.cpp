// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "sparsekit/graph.hpp"
#include "sparsekit/tolerance.hpp"

namespace sparsekit {
namespace {

CsrMatrix from_rows(Index cols, const std::vector<std::vector<Index>>& rows) {
  DenseMatrix d = DenseMatrix::Zero(static_cast<Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (Index c : rows[r]) d(static_cast<Index>(r), c) = 1.0f + static_cast<float>(c);
  return csr_from_dense(d);
}

// Greedy ordering written from the definition with std::set intersections.
std::vector<Index> naive_greedy(const CsrMatrix& a) {
  const Index m = a.rows();
  std::vector<std::set<Index>> cols(static_cast<std::size_t>(m));
  for (Index r = 0; r < m; ++r) {
    const auto c = a.row_cols(r);
    cols[static_cast<std::size_t>(r)].insert(c.begin(), c.end());
  }
  std::vector<bool> used(static_cast<std::size_t>(m), false);
  std::vector<Index> order;
  auto pick = [&](auto score) {
    Index best = -1;
    long best_score = -1;
    for (Index r = 0; r < m; ++r) {
      if (used[static_cast<std::size_t>(r)]) continue;
      const long s = score(r);
      if (s > best_score) best = r, best_score = s;
    }
    used[static_cast<std::size_t>(best)] = true;
    order.push_back(best);
  };
  pick([&](Index r) { return static_cast<long>(cols[static_cast<std::size_t>(r)].size()); });
  while (static_cast<Index>(order.size()) < m) {
    const auto& prev = cols[static_cast<std::size_t>(order.back())];
    pick([&](Index r) {
      std::vector<Index> both;
      const auto& cur = cols[static_cast<std::size_t>(r)];
      std::set_intersection(prev.begin(), prev.end(), cur.begin(), cur.end(), std::back_inserter(both));
      return static_cast<long>(both.size());
    });
  }
  return order;
}

Layer matmul(std::string id, std::string in, CsrMatrix w) {
  Layer l;
  l.id = l.output = std::move(id);
  l.kind = LayerKind::SparseMatmul;
  l.inputs = {std::move(in)};
  l.weight = std::move(w);
  return l;
}

Layer elementwise(std::string id, std::vector<std::string> in, ElementwiseOp op, std::vector<float> params = {}) {
  Layer l;
  l.id = l.output = std::move(id);
  l.kind = LayerKind::Elementwise;
  l.inputs = std::move(in);
  l.op = {op, std::move(params)};
  return l;
}

LayerGraph chain(int n, Index width = 16) {
  LayerGraph g;
  g.input = "x";
  g.input_shape = {width, 3};
  std::string prev = "x";
  for (int i = 0; i < n; ++i) {
    g.layers.push_back(matmul("l" + std::to_string(i), prev, generate_synthetic(width, width, 0.5, i)));
    prev = g.layers.back().output;
  }
  g.output = prev;
  return g;
}

// x -> fc1 -> relu -> fc2 -> add(fc2, x)
LayerGraph residual(Index width = 16) {
  LayerGraph g;
  g.input = "x";
  g.input_shape = {width, 2};
  g.layers.push_back(matmul("fc1", "x", generate_synthetic(width, width, 0.5, 1)));
  g.layers.push_back(elementwise("relu", {"fc1"}, ElementwiseOp::Relu));
  g.layers.push_back(matmul("fc2", "relu", generate_synthetic(width, width, 0.5, 2)));
  g.layers.push_back(elementwise("sum", {"fc2", "x"}, ElementwiseOp::Add));
  g.output = "sum";
  return g;
}

Tolerance tight() { return {1e-6, 0.0}; }

void expect_same_outputs(const LayerGraph& a, const LayerGraph& b, int inputs, Accumulation acc) {
  for (int s = 0; s < inputs; ++s) {
    const DenseMatrix x = random_dense(a.input_shape.rows, a.input_shape.cols, 900 + s);
    const auto cmp = compare_relative(run_reference(b, x, acc), run_reference(a, x, acc), tight());
    EXPECT_TRUE(cmp.passed) << cmp.summary();
  }
}

TEST(LayerGraph, ShapesOfMlp) {
  const auto g = make_mlp({.width = 32, .layers = 3, .sparsity = 0.8, .batch = 4});
  const auto shapes = g.infer_shapes();
  EXPECT_EQ(shapes.at(g.output), (Shape{32, 4}));
  EXPECT_EQ(g.layers.size(), 3u + 3u + 2u);
}

TEST(LayerGraph, ShapeMismatchNamesTheEdge) {
  LayerGraph g = chain(2);
  g.layers[1].weight = generate_synthetic(16, 12, 0.5, 3);
  try {
    g.validate();
    FAIL() << "expected GraphError";
  } catch (const GraphError& e) {
    EXPECT_NE(std::string(e.what()).find("'l0' -> 'l1'"), std::string::npos) << e.what();
  }
}

TEST(LayerGraph, StructuralErrors) {
  LayerGraph g = chain(2);
  g.layers[1].inputs = {"nope"};
  EXPECT_THROW(g.validate(), GraphError);
  g = chain(2);
  g.layers[1].output = "l0";
  EXPECT_THROW(g.validate(), GraphError);
  g = chain(1);
  g.output = "missing";
  EXPECT_THROW(g.validate(), GraphError);
  g = residual();
  g.layers.push_back(elementwise("b", {"sum"}, ElementwiseOp::BiasAdd, {1.0f, 2.0f}));
  g.output = "b";
  EXPECT_THROW(g.validate(), GraphError);
}

TEST(LayerGraph, ReferenceInterpreterModesAgree) {
  const auto g = residual();
  const DenseMatrix x = random_dense(16, 2, 3);
  const auto cmp = compare_relative(run_reference(g, x, Accumulation::Float32),
                                    run_reference(g, x, Accumulation::Float64), {1e-5, 1e-6});
  EXPECT_TRUE(cmp.passed) << cmp.summary();
}

TEST(Greedy, WorkedExample) {
  const CsrMatrix a = from_rows(3, {{1}, {0, 1, 2}, {1, 2}});
  EXPECT_EQ(permute_rows_greedy(a).order, (std::vector<Index>{1, 2, 0}));
}

TEST(Greedy, TieBreaksToIdentity) {
  EXPECT_EQ(permute_rows_greedy(from_rows(4, {{0, 2}, {0, 2}, {0, 2}})), Permutation::identity(3));
  EXPECT_EQ(permute_rows_greedy(csr_from_dense(DenseMatrix::Ones(5, 4).eval())), Permutation::identity(5));
  EXPECT_EQ(permute_rows_greedy(from_rows(3, {{}, {}, {}})), Permutation::identity(3));
}

TEST(Greedy, MatchesNaiveOracle) {
  std::mt19937 rng(8);
  std::uniform_int_distribution<int> dim(1, 24);
  std::uniform_real_distribution<double> sp(0.0, 0.95);
  for (int trial = 0; trial < 200; ++trial) {
    const CsrMatrix a = generate_synthetic(dim(rng), dim(rng), sp(rng), trial);
    const Permutation p = permute_rows_greedy(a);
    ASSERT_TRUE(p.is_bijection());
    EXPECT_EQ(p.order, naive_greedy(a)) << "trial " << trial;
  }
}

TEST(RowPermutation, SwapAndIdentity) {
  const CsrMatrix a = csr_from_dense((DenseMatrix(2, 2) << 0, 2, 3, 0).finished());
  EXPECT_EQ(apply_row_permutation(a, {{1, 0}}), csr_from_dense((DenseMatrix(2, 2) << 3, 0, 0, 2).finished()));
  EXPECT_EQ(apply_row_permutation(a, Permutation::identity(2)), a);
  EXPECT_EQ(apply_col_permutation(a, Permutation::identity(2)), a);
  EXPECT_THROW(apply_row_permutation(a, Permutation::identity(3)), DimensionError);
  EXPECT_THROW(apply_col_permutation(a, {{0, 0}}), DimensionError);
}

TEST(RowPermutation, PreservesRowMultiset) {
  const CsrMatrix a = generate_synthetic(30, 20, 0.7, 4);
  const CsrMatrix b = apply_row_permutation(a, permute_rows_greedy(a));
  const DenseMatrix da = csr_to_dense(a), db = csr_to_dense(b);
  std::multiset<std::vector<float>> ra, rb;
  for (Index r = 0; r < 30; ++r) {
    ra.insert(std::vector<float>(da.row(r).begin(), da.row(r).end()));
    rb.insert(std::vector<float>(db.row(r).begin(), db.row(r).end()));
  }
  EXPECT_EQ(ra, rb);
}

TEST(RowPermutation, CompositionIdentity) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> dim(1, 64);
  for (int trial = 0; trial < 40; ++trial) {
    const Index m = dim(rng), k = dim(rng), n = dim(rng);
    const CsrMatrix w1 = generate_synthetic(k, n, 0.6, trial), w2 = generate_synthetic(m, k, 0.6, 100 + trial);
    std::vector<Index> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const Permutation p{order};
    const auto expected = oracle_product(csr_to_dense(w2), csr_to_dense(w1));
    const DenseMatrix got = dense_matmul_oracle(csr_to_dense(apply_col_permutation(w2, p)),
                                                csr_to_dense(apply_row_permutation(w1, p)));
    EXPECT_TRUE(compare_scaled(got, expected.value, expected.magnitude, {1e-7, 0.0}).passed);
  }
}

TEST(Propagate, TwoLayerMlpPreservesOutputs) {
  const auto g = make_mlp({.width = 64, .layers = 2, .sparsity = 0.8, .batch = 3});
  PermutationReport rep;
  const auto p = propagate_permutations(g, &rep);
  ASSERT_EQ(rep.applied.size(), 1u);
  EXPECT_EQ(rep.applied[0].producer, "fc1");
  EXPECT_EQ(rep.applied[0].consumer, "fc2");
  EXPECT_EQ(rep.applied[0].through, (std::vector<std::string>{"bias1", "relu1"}));
  EXPECT_FALSE(p.layers[0].weight == g.layers[0].weight);
  expect_same_outputs(g, p, 10, Accumulation::Float64);
}

TEST(Propagate, OutputLayerUntouched) {
  const auto g = chain(1);
  const auto p = propagate_permutations(g);
  EXPECT_EQ(p.layers[0].weight, g.layers[0].weight);
}

TEST(Propagate, DenseFallbackBlocksChain) {
  LayerGraph g = chain(3);
  g.layers[1].kind = LayerKind::DenseFallback;
  g.layers[1].dense = csr_to_dense(g.layers[1].weight);
  PermutationReport rep;
  const auto p = propagate_permutations(g, &rep);
  EXPECT_TRUE(rep.applied.empty());
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(p.layers[i].weight, g.layers[i].weight);
  expect_same_outputs(g, p, 3, Accumulation::Float32);
}

TEST(Propagate, MultiConsumerAndResidualSkipped) {
  const auto g = residual();
  PermutationReport rep;
  const auto p = propagate_permutations(g, &rep);
  // fc1 -> relu -> fc2 is legal; fc2 feeds the add.
  ASSERT_EQ(rep.applied.size(), 1u);
  EXPECT_EQ(rep.skipped.size(), 1u);
  expect_same_outputs(g, p, 5, Accumulation::Float64);
}

TEST(Propagate, FusedChannelParamsFollowRows) {
  const auto g = fuse_elementwise(make_mlp({.width = 48, .layers = 3, .sparsity = 0.7, .batch = 2}));
  PermutationReport rep;
  const auto p = propagate_permutations(g, &rep);
  EXPECT_EQ(rep.applied.size(), 2u);
  expect_same_outputs(g, p, 5, Accumulation::Float64);
}

TEST(Fuse, MatmulBiasReluBecomesOneNode) {
  LayerGraph g = chain(2);
  std::vector<float> bias(16, 0.5f);
  g.layers.insert(g.layers.begin() + 1, elementwise("b", {"l0"}, ElementwiseOp::BiasAdd, bias));
  g.layers.insert(g.layers.begin() + 2, elementwise("r", {"b"}, ElementwiseOp::Relu));
  g.layers[3].inputs = {"r"};
  const auto f = fuse_elementwise(g);
  ASSERT_EQ(f.layers.size(), 2u);
  EXPECT_EQ(f.layers[0].epilogue, (Epilogue{{ElementwiseOp::BiasAdd, bias}, {ElementwiseOp::Relu, {}}}));
  EXPECT_EQ(f.layers[0].output, "r");
  expect_same_outputs(g, f, 3, Accumulation::Float32);
}

TEST(Fuse, SkipConnectionNotFused) {
  LayerGraph g = residual();
  // relu output read twice: by fc2 and by the add.
  g.layers[3].inputs = {"fc2", "relu"};
  const auto f = fuse_elementwise(g);
  EXPECT_EQ(f.layers.size(), g.layers.size());
  EXPECT_TRUE(f.layers[0].epilogue.empty());
}

TEST(Fuse, MlpOutputsBitwiseUnchanged) {
  const auto g = make_mlp({.width = 64, .layers = 3, .sparsity = 0.8, .batch = 2});
  const auto f = fuse_elementwise(g);
  EXPECT_EQ(f.layers.size(), 3u);
  for (int s = 0; s < 3; ++s) {
    const DenseMatrix x = random_dense(64, 2, s);
    EXPECT_TRUE(bitwise_equal(run_reference(f, x), run_reference(g, x)));
  }
}

TEST(PlanBuffers, Examples) {
  EXPECT_EQ(plan_buffers(chain(3)).arena_count(), 2);
  EXPECT_EQ(plan_buffers(chain(1)).arena_count(), 2);
  EXPECT_EQ(plan_buffers(residual()).arena_count(), 3);
}

TEST(PlanBuffers, Invariants) {
  for (const LayerGraph& g : {chain(5), residual(), make_mlp({.width = 32, .layers = 4, .sparsity = 0.5})}) {
    const auto plan = plan_buffers(g);
    const auto ranges = live_ranges(g);
    const auto shapes = g.infer_shapes();
    EXPECT_LE(plan.arena_count(), static_cast<int>(ranges.size()));
    for (const auto& [a, arena_a] : plan.assignment) {
      EXPECT_GE(plan.arena_bytes[static_cast<std::size_t>(arena_a)], shapes.at(a).bytes());
      for (const auto& [b, arena_b] : plan.assignment) {
        if (a == b || arena_a != arena_b) continue;
        const auto ra = ranges.at(a), rb = ranges.at(b);
        EXPECT_TRUE(ra.second < rb.first || rb.second < ra.first) << a << " vs " << b;
      }
    }
  }
  EXPECT_EQ(private_buffers(chain(3)).arena_count(), 4);
}

class GraphFileTest : public ::testing::Test {
 protected:
  std::filesystem::path dir = std::filesystem::temp_directory_path() /
                              ("sparsekit_graph_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                               "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
  void TearDown() override { std::filesystem::remove_all(dir); }
};

TEST_F(GraphFileTest, RoundTripMixedGraph) {
  LayerGraph g;
  g.input = "img";
  g.input_shape = {3, 36};
  Layer conv;
  conv.id = conv.output = "conv";
  conv.kind = LayerKind::SparseConv;
  conv.inputs = {"img"};
  conv.conv = {3, 4, 3, 3, 6, 6, 1, 1};
  conv.weight = flatten_filters(generate_synthetic_filters(4, 3, 3, 3, 0.6, 1));
  conv.epilogue = {{ElementwiseOp::Scale, {0.5f, 1.5f, -2.0f, 0.1f}}, {ElementwiseOp::Gelu, {}}};
  g.layers.push_back(conv);
  Layer dense;
  dense.id = dense.output = "proj";
  dense.kind = LayerKind::DenseFallback;
  dense.inputs = {"conv"};
  dense.dense = random_dense(5, 4, 2);
  g.layers.push_back(dense);
  g.layers.push_back(elementwise("b", {"proj"}, ElementwiseOp::BiasAdd, {0.1f, 0.2f, 0.3f, 0.4f, 1e-8f}));
  g.output = "b";

  const auto path = save_graph(g, dir, "net");
  const LayerGraph h = load_graph(path);
  ASSERT_EQ(h.layers.size(), 3u);
  EXPECT_EQ(h.input_shape, g.input_shape);
  EXPECT_EQ(h.layers[0].conv, g.layers[0].conv);
  EXPECT_EQ(h.layers[0].weight, g.layers[0].weight);
  EXPECT_EQ(h.layers[0].epilogue, g.layers[0].epilogue);
  EXPECT_TRUE(bitwise_equal(h.layers[1].dense, g.layers[1].dense));
  EXPECT_EQ(h.layers[2].op, g.layers[2].op);
  const DenseMatrix x = random_dense(3, 36, 5);
  EXPECT_TRUE(bitwise_equal(run_reference(h, x), run_reference(g, x)));
}

TEST_F(GraphFileTest, MalformedFiles) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& text) {
    std::ofstream(dir / "g.json") << text;
    return dir / "g.json";
  };
  EXPECT_THROW(load_graph(write("{not json")), FormatError);
  EXPECT_THROW(load_graph(write(R"({"format":"other","version":1})")), FormatError);
  EXPECT_THROW(load_graph(dir / "absent.json"), FileError);

  const auto path = save_graph(chain(2), dir, "c");
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto pos = text.find("\"shape\": [\n        16,");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 22, "\"shape\": [\n        17,");
  EXPECT_THROW(load_graph(write(text)), GraphError);
}

}  // namespace
}  // namespace sparsekit
