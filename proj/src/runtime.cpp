// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparsekit/runtime.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "sparsekit/autotune.hpp"
#include "sparsekit/kernel_blob.hpp"

namespace sparsekit {

int default_workers() {
  if (const char* env = std::getenv("SPARSEKIT_THREADS")) {
    int n = 0;
    const char* end = env + std::strlen(env);
    auto [p, ec] = std::from_chars(env, end, n);
    if (ec == std::errc() && p == end && n > 0) return n;
  }
  return kDefaultWorkers;
}

// WorkerPool

WorkerPool::WorkerPool(int workers) : workers_(workers) {
  if (workers < 1) throw ConfigError("worker count must be >= 1");
  threads_.reserve(static_cast<std::size_t>(workers - 1));
  for (int w = 1; w < workers; ++w) threads_.emplace_back([this, w] { loop(w); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  start_cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::loop(int worker) {
  std::uint64_t seen = 0;
  while (true) {
    const std::function<void(int)>* job;
    {
      std::unique_lock lock(mu_);
      start_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      job = job_;
    }
    std::exception_ptr err;
    try {
      (*job)(worker);
    } catch (...) {
      err = std::current_exception();
    }
    std::lock_guard lock(mu_);
    if (err && !error_) error_ = err;
    if (--pending_ == 0) done_cv_.notify_one();
  }
}

void WorkerPool::run(const std::function<void(int)>& fn) {
  {
    std::lock_guard lock(mu_);
    job_ = &fn;
    pending_ = workers_ - 1;
    error_ = nullptr;
    ++generation_;
  }
  start_cv_.notify_all();
  std::exception_ptr err;
  try {
    fn(0);
  } catch (...) {
    err = std::current_exception();
  }
  std::unique_lock lock(mu_);
  done_cv_.wait(lock, [&] { return pending_ == 0; });
  if (!err) err = error_;
  if (err) std::rethrow_exception(err);
}

// Preparation

MicrokernelConfig default_config(Index b_cols) {
  const int vw = b_cols >= 8 ? 8 : b_cols >= 4 ? 4 : 1;
  const int tv = std::clamp(static_cast<int>((b_cols + vw - 1) / vw), 1, 4);
  return {tv == 1 ? 4 : 2, tv, vw, 1};
}

namespace {

std::shared_ptr<const KernelProgram> build_program(const Layer& l, Index b_cols, const PrepareOptions& opts) {
  MicrokernelConfig cfg = opts.config.value_or(default_config(b_cols));
  if (opts.tune) {
    const auto space = default_tune_space(l.weight.cols(), cfg.vector_width, opts.register_budget);
    cfg = autotune(l.weight, b_cols, space, opts.tune_timing, opts.backend, opts.register_budget).best;
  }
  return std::make_shared<const KernelProgram>(generate_kernel(l.weight, b_cols, cfg, opts.register_budget));
}

void compile_layer(PreparedNetwork& net, std::size_t i, std::shared_ptr<const KernelProgram> program) {
  const Layer& l = net.graph.layers[i];
  auto kernel = lower_kernel(std::move(program), net.options.backend);
  if (l.kind == LayerKind::SparseConv) {
    net.compiled[i].conv = std::make_shared<const SparseConv>(l.conv, std::move(kernel));
  } else {
    net.compiled[i].kernel = std::move(kernel);
  }
}

template <typename F>
void with_layer_context(const Layer& l, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    throw ConfigError("layer '" + l.id + "': " + e.what());
  } catch (const GraphError&) {
    throw;
  } catch (const Error& e) {
    throw GraphError("layer '" + l.id + "': kernel generation failed: " + e.what());
  }
}

bool is_sparse(const Layer& l) { return l.kind == LayerKind::SparseMatmul || l.kind == LayerKind::SparseConv; }

Index output_cols(const PreparedNetwork& net, const Layer& l) { return net.shapes.at(l.output).cols; }

}  // namespace

PreparedNetwork prepare(const LayerGraph& g, const PrepareOptions& opts) {
  g.validate();
  PreparedNetwork net;
  net.options = opts;
  net.graph = opts.fuse ? fuse_elementwise(g) : g;
  if (opts.permute) net.graph = propagate_permutations(net.graph);
  net.shapes = net.graph.infer_shapes();
  net.plan = opts.reuse_buffers ? plan_buffers(net.graph) : private_buffers(net.graph);
  net.compiled.resize(net.graph.layers.size());
  for (std::size_t i = 0; i < net.graph.layers.size(); ++i) {
    const Layer& l = net.graph.layers[i];
    if (!is_sparse(l)) continue;
    with_layer_context(l, [&] { compile_layer(net, i, build_program(l, output_cols(net, l), opts)); });
  }
  return net;
}

namespace {

using nlohmann::json;

constexpr const char* kManifest = "manifest.json";

json options_json(const PrepareOptions& o) {
  json j{{"fuse", o.fuse}, {"permute", o.permute}, {"reuse_buffers", o.reuse_buffers},
         {"tune", o.tune}, {"backend", o.backend}, {"register_budget", o.register_budget}};
  if (o.config) j["config"] = o.config->to_string();
  return j;
}

PrepareOptions options_from_json(const json& j) {
  PrepareOptions o;
  o.fuse = j.at("fuse").get<bool>();
  o.permute = j.at("permute").get<bool>();
  o.reuse_buffers = j.at("reuse_buffers").get<bool>();
  o.tune = j.at("tune").get<bool>();
  o.backend = j.at("backend").get<std::string>();
  o.register_budget = j.at("register_budget").get<int>();
  if (j.contains("config")) o.config = MicrokernelConfig::parse(j.at("config").get<std::string>());
  return o;
}

}  // namespace

void save_prepared(const PreparedNetwork& net, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_graph(net.graph, dir, "graph");
  json kernels = json::object();
  for (std::size_t i = 0; i < net.graph.layers.size(); ++i) {
    const auto& c = net.compiled[i];
    const ExecutableKernel* k = c.kernel ? c.kernel.get() : c.conv ? &c.conv->kernel() : nullptr;
    if (!k) continue;
    const std::string file = "kernel." + net.graph.layers[i].id + ".spkn";
    save_kernel(k->program(), dir / file);
    kernels[net.graph.layers[i].id] = {{"file", file}, {"config", k->program().config.to_string()}};
  }
  const json manifest{{"format", "sparsekit-prepared"},
                      {"version", 1},
                      {"options", options_json(net.options)},
                      {"kernels", std::move(kernels)}};
  std::ofstream out(dir / kManifest);
  if (!out) throw FileError("cannot write " + (dir / kManifest).string());
  out << manifest.dump(2) << '\n';
}

PreparedNetwork load_prepared(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifest);
  if (!in) throw FileError("no prepared network in " + dir.string());
  PreparedNetwork net;
  json manifest;
  try {
    manifest = json::parse(in);
    if (manifest.value("format", "") != "sparsekit-prepared" || manifest.value("version", 0) != 1) {
      throw FormatError("not a sparsekit-prepared manifest");
    }
    net.options = options_from_json(manifest.at("options"));
  } catch (const json::exception& e) {
    throw FormatError((dir / kManifest).string() + ": " + e.what());
  }
  // Passes already ran before saving; the stored graph is final.
  net.graph = load_graph(dir / "graph.json");
  net.shapes = net.graph.infer_shapes();
  net.plan = net.options.reuse_buffers ? plan_buffers(net.graph) : private_buffers(net.graph);
  net.compiled.resize(net.graph.layers.size());
  const json& kernels = manifest.at("kernels");
  for (std::size_t i = 0; i < net.graph.layers.size(); ++i) {
    const Layer& l = net.graph.layers[i];
    if (!is_sparse(l)) continue;
    if (!kernels.contains(l.id)) throw FormatError("manifest has no kernel for layer '" + l.id + "'");
    auto program = std::make_shared<const KernelProgram>(
        load_kernel(dir / kernels.at(l.id).at("file").get<std::string>()));
    const auto values = csr_values_from_ordered(*program);
    if (program->m != l.weight.rows() || program->n != l.weight.cols() ||
        program->b_cols != output_cols(net, l) ||
        !std::equal(values.begin(), values.end(), l.weight.values().begin(), l.weight.values().end())) {
      throw FormatError("kernel for layer '" + l.id + "' does not match its weights");
    }
    compile_layer(net, i, std::move(program));
  }
  return net;
}

PreparedNetwork prepare_cached(const LayerGraph& g, const PrepareOptions& opts, const std::filesystem::path& dir) {
  if (std::filesystem::exists(dir / kManifest)) {
    PreparedNetwork net = load_prepared(dir);
    if (options_json(net.options) == options_json(opts)) return net;
  }
  PreparedNetwork net = prepare(g, opts);
  save_prepared(net, dir);
  return net;
}

// Execution

std::string_view to_string(RunMode mode) { return mode == RunMode::Sync ? "sync" : "async"; }

struct Engine::Workspace {
  std::vector<std::vector<float>> arenas;

  explicit Workspace(const BufferPlan& plan) {
    for (std::size_t bytes : plan.arena_bytes) arenas.emplace_back(bytes / sizeof(float));
  }
};

namespace {

DenseMap view(const PreparedNetwork& net, std::vector<std::vector<float>>& arenas, const std::string& act) {
  const Shape s = net.shapes.at(act);
  return DenseMap(arenas[static_cast<std::size_t>(net.plan.assignment.at(act))].data(), s.rows, s.cols);
}

std::pair<Index, Index> split(Index total, int part, int parts) {
  return {static_cast<Index>(static_cast<std::int64_t>(total) * part / parts),
          static_cast<Index>(static_cast<std::int64_t>(total) * (part + 1) / parts)};
}

}  // namespace

Engine::Engine(std::shared_ptr<const PreparedNetwork> net, int workers)
    : net_(std::move(net)), pool_(workers), barrier_(workers) {
  for (int w = 0; w < workers; ++w) workspaces_.push_back(std::make_unique<Workspace>(net_->plan));
}

Engine::~Engine() = default;

void Engine::check_input(const DenseMatrix& input) const {
  const Shape s = net_->input_shape();
  if (input.rows() != s.rows || input.cols() != s.cols) {
    throw DimensionError("network input must be " + std::to_string(s.rows) + "x" + std::to_string(s.cols) +
                         ", got " + std::to_string(input.rows()) + "x" + std::to_string(input.cols()));
  }
}

void Engine::run_layer_part(Workspace& ws, std::size_t i, int part, int parts) const {
  const PreparedNetwork& net = *net_;
  const Layer& l = net.graph.layers[i];
  const CompiledLayer& c = net.compiled[i];
  DenseMap out = view(net, ws.arenas, l.output);
  const DenseMap x = view(net, ws.arenas, l.inputs[0]);
  const Epilogue* epi = l.epilogue.empty() ? nullptr : &l.epilogue;

  if (c.kernel) {
    const auto [t0, t1] = split(c.kernel->row_tiles(), part, parts);
    if (t0 < t1) c.kernel->run(DenseOperand(x), out, {t0, t1}, epi);
    return;
  }
  if (c.conv) {
    const auto [t0, t1] = split(c.conv->kernel().row_tiles(), part, parts);
    if (t0 < t1) c.conv->run(x, out, {t0, t1}, epi);
    return;
  }

  const auto [r0, r1] = split(static_cast<Index>(out.rows()), part, parts);
  if (r0 == r1) return;
  if (l.kind == LayerKind::DenseFallback) {
    for (Index r = r0; r < r1; ++r) {
      out.row(r).setZero();
      for (Index k = 0; k < l.dense.cols(); ++k) {
        const float w = l.dense(r, k);
        for (Index j = 0; j < out.cols(); ++j) out(r, j) += w * x(k, j);
      }
    }
  } else if (l.op.op == ElementwiseOp::Add) {
    const DenseMap y = view(net, ws.arenas, l.inputs[1]);
    out.middleRows(r0, r1 - r0) = x.middleRows(r0, r1 - r0) + y.middleRows(r0, r1 - r0);
  } else {
    out.middleRows(r0, r1 - r0) = x.middleRows(r0, r1 - r0);
    apply_rows(l.op, out, r0, r1);
  }
  for (const auto& step : l.epilogue) apply_rows(step, out, r0, r1);
}

void Engine::infer_sync(const DenseMatrix& input, DenseMatrix& output) {
  const PreparedNetwork& net = *net_;
  Workspace& ws = *workspaces_[0];
  view(net, ws.arenas, net.graph.input) = input;
  const int parts = pool_.size();
  pool_.run([&](int w) {
    for (std::size_t i = 0; i < net.graph.layers.size(); ++i) {
      run_layer_part(ws, i, w, parts);
      if (parts > 1) barrier_.arrive_and_wait();
    }
  });
  output = view(net, ws.arenas, net.graph.output);
}

void Engine::infer_private(Workspace& ws, const DenseMatrix& input, DenseMatrix& output) const {
  const PreparedNetwork& net = *net_;
  view(net, ws.arenas, net.graph.input) = input;
  for (std::size_t i = 0; i < net.graph.layers.size(); ++i) run_layer_part(ws, i, 0, 1);
  output = view(net, ws.arenas, net.graph.output);
}

DenseMatrix Engine::infer(const DenseMatrix& input) {
  check_input(input);
  DenseMatrix out;
  infer_sync(input, out);
  return out;
}

RunResult Engine::run_sync(std::span<const DenseMatrix> inputs, int warmup) {
  if (inputs.empty()) throw ConfigError("run_sync: no inputs");
  for (const auto& x : inputs) check_input(x);
  RunResult r;
  r.outputs.resize(inputs.size());
  for (int i = 0; i < warmup; ++i) infer_sync(inputs[0], r.outputs[0]);
  std::vector<double> lat;
  lat.reserve(inputs.size());
  const auto start = Clock::now();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto t0 = Clock::now();
    infer_sync(inputs[i], r.outputs[i]);
    lat.push_back(seconds_since(t0));
  }
  r.stats = make_stats(RunMode::Sync, workers(), lat, seconds_since(start));
  return r;
}

RunResult Engine::run_async(std::span<const DenseMatrix> inputs, int warmup) {
  const int parts = workers();
  if (static_cast<int>(inputs.size()) < parts) {
    throw ConfigError("run_async: " + std::to_string(inputs.size()) + " inputs for " + std::to_string(parts) +
                      " workers");
  }
  for (const auto& x : inputs) check_input(x);
  RunResult r;
  r.outputs.resize(inputs.size());
  std::vector<double> lat(inputs.size());
  Clock::time_point start;
  pool_.run([&](int w) {
    Workspace& ws = *workspaces_[static_cast<std::size_t>(w)];
    const auto [b, e] = split(static_cast<Index>(inputs.size()), w, parts);
    for (int i = 0; i < warmup; ++i) infer_private(ws, inputs[static_cast<std::size_t>(b)], r.outputs[static_cast<std::size_t>(b)]);
    barrier_.arrive_and_wait();
    if (w == 0) start = Clock::now();
    for (Index i = b; i < e; ++i) {
      const auto t0 = Clock::now();
      infer_private(ws, inputs[static_cast<std::size_t>(i)], r.outputs[static_cast<std::size_t>(i)]);
      lat[static_cast<std::size_t>(i)] = seconds_since(t0);
    }
  });
  r.stats = make_stats(RunMode::Async, parts, lat, seconds_since(start));
  return r;
}

RunStats make_stats(RunMode mode, int workers, std::span<const double> latencies, double wall_seconds) {
  RunStats s;
  s.mode = mode;
  s.workers = workers;
  s.inputs = static_cast<int>(latencies.size());
  const std::vector<double> lat(latencies.begin(), latencies.end());
  s.latency_p50 = percentile(lat, 0.50);
  s.latency_p95 = percentile(lat, 0.95);
  s.latency_mean = lat.empty() ? 0.0 : std::accumulate(lat.begin(), lat.end(), 0.0) / static_cast<double>(lat.size());
  s.wall_seconds = wall_seconds;
  s.throughput = wall_seconds > 0 ? static_cast<double>(lat.size()) / wall_seconds : 0.0;
  return s;
}

RunResult run_sync(const PreparedNetwork& net, std::span<const DenseMatrix> inputs, const RunOptions& opts) {
  Engine engine(std::make_shared<const PreparedNetwork>(net), opts.workers);
  return engine.run_sync(inputs, opts.warmup);
}

RunResult run_async(const PreparedNetwork& net, std::span<const DenseMatrix> inputs, const RunOptions& opts) {
  Engine engine(std::make_shared<const PreparedNetwork>(net), opts.workers);
  return engine.run_async(inputs, opts.warmup);
}

}  // namespace sparsekit
