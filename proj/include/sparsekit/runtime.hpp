// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <barrier>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "sparsekit/backend.hpp"
#include "sparsekit/conv.hpp"
#include "sparsekit/graph.hpp"
#include "sparsekit/timing.hpp"

namespace sparsekit {

inline constexpr int kDefaultWorkers = 4;

/// kDefaultWorkers unless SPARSEKIT_THREADS holds a positive integer.
int default_workers();

/// Fixed set of threads. run() executes fn(worker) on every worker, the
/// calling thread acting as worker 0, and returns when all are done.
class WorkerPool {
 public:
  explicit WorkerPool(int workers);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int size() const { return workers_; }
  void run(const std::function<void(int)>& fn);

 private:
  void loop(int worker);

  int workers_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable start_cv_, done_cv_;
  const std::function<void(int)>* job_ = nullptr;
  std::uint64_t generation_ = 0;
  int pending_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

struct PrepareOptions {
  bool fuse = true;
  bool permute = true;
  bool reuse_buffers = true;
  bool tune = false;
  std::string backend = std::string(kNativeBackend);
  /// Used for every sparse layer when set; otherwise chosen per layer.
  std::optional<MicrokernelConfig> config;
  TimingOptions tune_timing{1, 5};
  int register_budget = kDefaultRegisterBudget;
};

/// Heuristic config for a given output width when not tuning.
MicrokernelConfig default_config(Index b_cols);

struct CompiledLayer {
  std::shared_ptr<const ExecutableKernel> kernel;  // SparseMatmul
  std::shared_ptr<const SparseConv> conv;          // SparseConv
};

struct PreparedNetwork {
  LayerGraph graph;
  std::vector<CompiledLayer> compiled;  // parallel to graph.layers
  BufferPlan plan;
  std::map<std::string, Shape> shapes;
  PrepareOptions options;

  Shape input_shape() const { return graph.input_shape; }
  Shape output_shape() const { return shapes.at(graph.output); }
};

/// Applies fuse -> permute -> buffer plan per the flags and generates kernels.
/// Errors name the offending layer.
PreparedNetwork prepare(const LayerGraph& g, const PrepareOptions& opts = {});

/// Cache directory: graph.json plus weights, one kernel blob per sparse
/// layer and manifest.json.
void save_prepared(const PreparedNetwork& net, const std::filesystem::path& dir);
PreparedNetwork load_prepared(const std::filesystem::path& dir);
/// Loads from `dir` if it holds a prepared network, otherwise prepares and
/// saves there.
PreparedNetwork prepare_cached(const LayerGraph& g, const PrepareOptions& opts, const std::filesystem::path& dir);

enum class RunMode { Sync, Async };
std::string_view to_string(RunMode mode);

struct RunStats {
  RunMode mode = RunMode::Sync;
  int workers = 1;
  int inputs = 0;
  double latency_p50 = 0.0;  // seconds per input
  double latency_p95 = 0.0;
  double latency_mean = 0.0;
  double throughput = 0.0;   // inputs per second
  double wall_seconds = 0.0;
};

struct RunResult {
  std::vector<DenseMatrix> outputs;  // in input order
  RunStats stats;
};

struct RunOptions {
  int workers = kDefaultWorkers;
  int warmup = 5;  // untimed passes before the measured window
};

/// Executes a prepared network. Sync mode splits each layer's rows across
/// the workers with a barrier between layers; async mode gives every worker
/// a private arena set and a contiguous slice of the inputs.
class Engine {
 public:
  Engine(std::shared_ptr<const PreparedNetwork> net, int workers);
  ~Engine();

  const PreparedNetwork& network() const { return *net_; }
  int workers() const { return pool_.size(); }

  /// One input, all workers.
  DenseMatrix infer(const DenseMatrix& input);

  RunResult run_sync(std::span<const DenseMatrix> inputs, int warmup = 5);
  RunResult run_async(std::span<const DenseMatrix> inputs, int warmup = 5);

 private:
  struct Workspace;

  void check_input(const DenseMatrix& input) const;
  void infer_sync(const DenseMatrix& input, DenseMatrix& output);
  void run_layer_part(Workspace& ws, std::size_t layer, int part, int parts) const;
  void infer_private(Workspace& ws, const DenseMatrix& input, DenseMatrix& output) const;

  std::shared_ptr<const PreparedNetwork> net_;
  WorkerPool pool_;
  std::barrier<> barrier_;
  std::vector<std::unique_ptr<Workspace>> workspaces_;
};

RunResult run_sync(const PreparedNetwork& net, std::span<const DenseMatrix> inputs, const RunOptions& opts = {});
RunResult run_async(const PreparedNetwork& net, std::span<const DenseMatrix> inputs, const RunOptions& opts = {});

/// Summarizes per-input latencies and the measured wall time.
RunStats make_stats(RunMode mode, int workers, std::span<const double> latencies, double wall_seconds);

}  // namespace sparsekit
