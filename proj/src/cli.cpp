// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparsekit/cli.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sparsekit/autotune.hpp"
#include "sparsekit/bench.hpp"
#include "sparsekit/graph.hpp"
#include "sparsekit/kernel_blob.hpp"
#include "sparsekit/matrix_io.hpp"
#include "sparsekit/runtime.hpp"
#include "sparsekit/tolerance.hpp"

namespace sparsekit {
namespace {

/// Bad option value detected after parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int exit_code_for(const std::exception_ptr& e, std::ostream& err) {
  try {
    std::rethrow_exception(e);
  } catch (const UsageError& x) {
    err << "error: " << x.what() << '\n';
    return kExitUsage;
  } catch (const FileError& x) {
    err << "file error: " << x.what() << '\n';
    return kExitFile;
  } catch (const FormatError& x) {
    err << "format error: " << x.what() << '\n';
    return kExitFormat;
  } catch (const DimensionError& x) {
    err << "dimension error: " << x.what() << '\n';
    return kExitDimension;
  } catch (const ConfigError& x) {
    err << "config error: " << x.what() << '\n';
    return kExitConfig;
  } catch (const GraphError& x) {
    err << "graph error: " << x.what() << '\n';
    return kExitGraph;
  } catch (const UnknownBackendError& x) {
    err << "backend error: " << x.what() << '\n';
    return kExitUnknownBackend;
  } catch (const std::exception& x) {
    err << "internal error: " << x.what() << '\n';
    return kExitInternal;
  }
}

std::pair<Index, Index> parse_dims(const std::string& text) {
  const auto x = text.find('x');
  Index m = 0, n = 0;
  auto ok = [](const char* b, const char* e, Index& v) {
    auto [p, ec] = std::from_chars(b, e, v);
    return ec == std::errc() && p == e && v >= 1;
  };
  const char* s = text.data();
  if (x == std::string::npos || !ok(s, s + x, m) || !ok(s + x + 1, s + text.size(), n)) {
    throw UsageError("--random expects MxN with positive dims, got '" + text + "'");
  }
  return {m, n};
}

int env_threads_or(int fallback) {
  const char* env = std::getenv("SPARSEKIT_THREADS");
  if (!env) return fallback;
  int n = 0;
  const std::string_view s(env);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
  if (ec != std::errc() || p != s.data() + s.size() || n < 1) {
    throw UsageError("SPARSEKIT_THREADS must be a positive integer");
  }
  return n;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw FileError("cannot write " + path);
  return f;
}

// gen

struct GenArgs {
  std::string matrix;
  std::string random;
  double sparsity = 0.9;
  std::uint64_t seed = 1;
  std::string output;
  Index b_cols = 128;
  std::string config;
  bool tune = false;
  std::string backend = std::string(kNativeBackend);
};

int do_gen(const GenArgs& a, std::ostream& out) {
  if (a.matrix.empty() == a.random.empty()) throw UsageError("gen needs exactly one of MATRIX or --random");
  if (a.b_cols < 1) throw UsageError("--bcols must be >= 1");
  CsrMatrix m;
  if (!a.random.empty()) {
    const auto [rows, cols] = parse_dims(a.random);
    m = generate_synthetic(rows, cols, a.sparsity, a.seed);
  } else {
    m = read_matrix_file(a.matrix);
  }
  MicrokernelConfig cfg = default_config(a.b_cols);
  if (!a.config.empty()) {
    cfg = MicrokernelConfig::parse(a.config);
  } else if (a.tune) {
    const auto space = default_tune_space(m.cols(), cfg.vector_width);
    cfg = autotune(m, a.b_cols, space, {2, 10}, a.backend).best;
  }
  const KernelProgram p = generate_kernel(m, a.b_cols, cfg);
  lower_kernel(p, a.backend);  // rejects unknown backends before writing
  save_kernel(p, a.output);
  out << "wrote " << a.output << ": " << m.rows() << "x" << m.cols() << " nnz " << m.nnz() << " b_cols " << a.b_cols
      << " config " << cfg.to_string() << " instructions " << p.instrs.size() << '\n';
  return kExitOk;
}

// verify

struct VerifyArgs {
  std::string kernel;
  std::string matrix;
  std::string backend = std::string(kNativeBackend);
  std::uint64_t seed = 7;
};

int do_verify(const VerifyArgs& a, std::ostream& out) {
  const KernelProgram p = load_kernel(a.kernel);
  const CsrMatrix decoded = decode_matrix(p);
  if (!a.matrix.empty()) {
    const CsrMatrix m = read_matrix_file(a.matrix);
    if (m.rows() != decoded.rows() || m.cols() != decoded.cols()) {
      throw DimensionError("kernel is for a " + std::to_string(decoded.rows()) + "x" + std::to_string(decoded.cols()) +
                           " matrix, file is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    if (!(m == decoded)) {
      out << "FAIL " << a.kernel << ": kernel does not encode " << a.matrix << '\n';
      return kExitVerify;
    }
  }
  const auto exe = lower_kernel(p, a.backend);
  const DenseMatrix b = random_dense(p.n, p.b_cols, a.seed);
  DenseMatrix c(p.m, p.b_cols);
  exe->run(DenseOperand(b), c);
  const OracleProduct oracle = oracle_product(csr_to_dense(decoded), b);
  const Comparison cmp = compare_scaled(c, oracle.value, oracle.magnitude);
  out << (cmp.passed ? "PASS " : "FAIL ") << a.kernel << ": " << p.m << "x" << p.n << " b_cols " << p.b_cols
      << " config " << p.config.to_string() << " " << cmp.summary() << '\n';
  return cmp.passed ? kExitOk : kExitVerify;
}

// permute

int do_permute(const std::string& matrix, const std::string& output, std::ostream& out) {
  const CsrMatrix m = read_matrix_file(matrix);
  const Permutation p = permute_rows_greedy(m);
  for (std::size_t i = 0; i < p.order.size(); ++i) out << (i ? " " : "") << p.order[i];
  out << '\n';
  if (!output.empty()) write_matrix_file(apply_row_permutation(m, p), output);
  return kExitOk;
}

// bench

struct BenchArgs {
  std::string kind;
  std::vector<Index> sizes, b_cols, channels, images;
  std::vector<double> sparsities;
  std::optional<int> seeds;
  std::optional<int> threads;
  bool full = false;
  bool tune = false;
  std::string config;
  int warmup = 5;
  int runs = 20;
  std::string output;
  std::string summary;
};

int do_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  const SuiteKind kind = parse_suite_kind(a.kind);
  SuiteSpec s = a.full ? SuiteSpec::full(kind) : SuiteSpec::desk(kind);
  if (!a.sizes.empty()) s.sizes = a.sizes;
  if (!a.b_cols.empty()) s.b_cols = a.b_cols;
  if (!a.channels.empty()) s.channels = a.channels;
  if (!a.images.empty()) s.images = a.images;
  if (!a.sparsities.empty()) s.sparsities = a.sparsities;
  if (a.seeds) s.seeds = *a.seeds;
  s.threads = a.threads ? *a.threads : env_threads_or(1);
  s.tune = a.tune;
  if (!a.config.empty()) s.config = MicrokernelConfig::parse(a.config);
  s.timing = {a.warmup, a.runs};
  s.validate();

  const auto records = run_suite(s);
  if (a.output.empty()) {
    write_records_csv(records, out);
  } else {
    auto f = open_out(a.output);
    write_records_csv(records, f);
  }
  std::ostream& info = a.output.empty() ? err : out;
  const auto failed = std::count_if(records.begin(), records.end(), [](const auto& r) { return !r.correct; });
  if (failed > 0) {
    for (const auto& r : records) {
      if (!r.correct) err << "FAIL m=" << r.m << " n=" << r.n << " seed=" << r.seed << ": " << r.error << '\n';
    }
    return kExitVerify;
  }
  const SuiteSummary sum = summarize(records);
  info << summary_json(sum, records) << '\n';
  if (!a.summary.empty()) {
    auto g = open_out(a.summary + ".geomean.csv");
    auto c = open_out(a.summary + ".cdf.csv");
    write_summary_csv(sum, g, c);
  }
  return kExitOk;
}

// run

struct RunArgs {
  std::string graph;
  std::string mode = "sync";
  std::optional<int> workers;
  int inputs = 16;
  int warmup = 5;
  std::uint64_t seed = 1;
  bool no_fuse = false, no_permute = false, no_reuse = false, tune = false, no_verify = false;
  std::string cache;
  std::string output;
};

void write_outputs(const std::vector<DenseMatrix>& outputs, const std::string& path) {
  auto f = open_out(path);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const DenseMatrix& m = outputs[i];
    f << "output " << i << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) f << (c ? " " : "") << format_float(m(r, c));
      f << '\n';
    }
  }
}

int do_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  if (a.mode != "sync" && a.mode != "async") throw UsageError("--mode must be sync or async");
  if (a.inputs < 1) throw UsageError("--inputs must be >= 1");
  const LayerGraph g = load_graph(a.graph);
  PrepareOptions po;
  po.fuse = !a.no_fuse;
  po.permute = !a.no_permute;
  po.reuse_buffers = !a.no_reuse;
  po.tune = a.tune;
  const PreparedNetwork net = a.cache.empty() ? prepare(g, po) : prepare_cached(g, po, a.cache);

  const Shape in = net.input_shape();
  std::vector<DenseMatrix> inputs;
  for (int i = 0; i < a.inputs; ++i) inputs.push_back(random_dense(in.rows, in.cols, a.seed + static_cast<std::uint64_t>(i)));
  RunOptions ro;
  ro.workers = a.workers ? *a.workers : default_workers();
  ro.warmup = a.warmup;
  const RunResult res = a.mode == "sync" ? run_sync(net, inputs, ro) : run_async(net, inputs, ro);

  bool ok = true;
  if (!a.no_verify) {
    for (int i = 0; i < a.inputs; ++i) {
      const Comparison cmp = compare_to_oracle(g, inputs[i], res.outputs[i]);
      if (!cmp.passed) {
        err << "FAIL input " << i << ": " << cmp.summary() << '\n';
        ok = false;
      }
    }
  }
  if (!a.output.empty()) write_outputs(res.outputs, a.output);

  const RunStats& s = res.stats;
  const nlohmann::json j{{"mode", std::string(to_string(s.mode))},
                         {"workers", s.workers},
                         {"inputs", s.inputs},
                         {"latency_p50_ms", s.latency_p50 * 1e3},
                         {"latency_p95_ms", s.latency_p95 * 1e3},
                         {"latency_mean_ms", s.latency_mean * 1e3},
                         {"throughput_per_s", s.throughput},
                         {"wall_seconds", s.wall_seconds},
                         {"verified", a.no_verify ? nlohmann::json(nullptr) : nlohmann::json(ok)}};
  out << j.dump() << '\n';
  return ok ? kExitOk : kExitVerify;
}

// mlp

int do_mlp(const std::string& dir, const MlpOptions& o, std::ostream& out) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FileError("cannot create " + dir + ": " + ec.message());
  out << save_graph(make_mlp(o), dir).string() << '\n';
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse kernel generator, graph optimizer and inference runtime."};
  app.name("sparsekit");
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a kernel program for a sparse matrix.");
  g->add_option("matrix", gen.matrix, "Input matrix (.mtx text or .bin binary)");
  g->add_option("--random", gen.random, "Generate an MxN synthetic matrix instead");
  g->add_option("--sparsity", gen.sparsity, "Sparsity of --random")->capture_default_str();
  g->add_option("--seed", gen.seed, "Seed of --random")->capture_default_str();
  g->add_option("-o,--output", gen.output, "Kernel file to write")->required();
  g->add_option("--bcols", gen.b_cols, "Columns of the dense operand")->capture_default_str();
  g->add_option("--config", gen.config, "Microkernel config, e.g. 2x4x8/1");
  g->add_flag("--tune", gen.tune, "Autotune the config");
  g->add_option("--backend", gen.backend, "Execution backend")->capture_default_str();

  VerifyArgs ver;
  auto* v = app.add_subcommand("verify", "Check a kernel program against the 64-bit oracle.");
  v->add_option("kernel", ver.kernel, "Kernel file")->required();
  v->add_option("--matrix", ver.matrix, "Also check that the kernel encodes this matrix");
  v->add_option("--backend", ver.backend, "Execution backend")->capture_default_str();
  v->add_option("--seed", ver.seed, "Seed of the random dense operand")->capture_default_str();

  std::string perm_matrix, perm_output;
  auto* p = app.add_subcommand("permute", "Print the greedy row permutation of a matrix.");
  p->add_option("matrix", perm_matrix, "Input matrix")->required();
  p->add_option("-o,--output", perm_output, "Write the row-permuted matrix here");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Run a benchmark suite and emit CSV.");
  b->add_option("kind", bench.kind, "spmm or conv")->required();
  b->add_option("--sizes", bench.sizes, "spmm matrix sizes")->delimiter(',');
  b->add_option("--bcols", bench.b_cols, "spmm dense operand widths")->delimiter(',');
  b->add_option("--channels", bench.channels, "conv channel counts")->delimiter(',');
  b->add_option("--images", bench.images, "conv image sizes")->delimiter(',');
  b->add_option("--sparsities", bench.sparsities, "Sparsity levels")->delimiter(',');
  b->add_option("--seeds", bench.seeds, "Seeds per grid point");
  b->add_option("--threads", bench.threads, "Worker threads (default: SPARSEKIT_THREADS or 1)");
  b->add_flag("--full", bench.full, "Start from the full grid instead of the desk grid");
  b->add_flag("--tune", bench.tune, "Autotune each problem");
  b->add_option("--config", bench.config, "Fixed microkernel config");
  b->add_option("--warmup", bench.warmup, "Untimed runs per measurement")->capture_default_str();
  b->add_option("--runs", bench.runs, "Timed runs per measurement")->capture_default_str();
  b->add_option("-o,--output", bench.output, "CSV file (default stdout)");
  b->add_option("--summary", bench.summary, "Write PREFIX.geomean.csv and PREFIX.cdf.csv");

  RunArgs run;
  auto* r = app.add_subcommand("run", "Prepare a layer graph and run it on random inputs.");
  r->add_option("graph", run.graph, "Graph JSON file")->required();
  r->add_option("--mode", run.mode, "sync or async")->capture_default_str();
  r->add_option("--workers", run.workers, "Worker threads (default: SPARSEKIT_THREADS or 4)");
  r->add_option("--inputs", run.inputs, "Number of random inputs")->capture_default_str();
  r->add_option("--warmup", run.warmup, "Untimed passes before measuring")->capture_default_str();
  r->add_option("--seed", run.seed, "Seed of the first input")->capture_default_str();
  r->add_flag("--no-fuse", run.no_fuse, "Disable elementwise fusion");
  r->add_flag("--no-permute", run.no_permute, "Disable permutation propagation");
  r->add_flag("--no-reuse", run.no_reuse, "Give every activation its own buffer");
  r->add_flag("--tune", run.tune, "Autotune every sparse layer");
  r->add_flag("--no-verify", run.no_verify, "Skip the oracle check of the outputs");
  r->add_option("--cache", run.cache, "Prepared-network cache directory");
  r->add_option("--output", run.output, "Write the outputs as text");

  std::string mlp_dir;
  MlpOptions mlp;
  auto* t = app.add_subcommand("mlp", "Write a random sparse MLP graph.");
  t->add_option("dir", mlp_dir, "Output directory")->required();
  t->add_option("--width", mlp.width)->capture_default_str();
  t->add_option("--layers", mlp.layers)->capture_default_str();
  t->add_option("--sparsity", mlp.sparsity)->capture_default_str();
  t->add_option("--batch", mlp.batch)->capture_default_str();
  t->add_option("--seed", mlp.seed)->capture_default_str();

  std::vector<const char*> argv{"sparsekit"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (g->parsed()) return do_gen(gen, out);
    if (v->parsed()) return do_verify(ver, out);
    if (p->parsed()) return do_permute(perm_matrix, perm_output, out);
    if (b->parsed()) return do_bench(bench, out, err);
    if (r->parsed()) return do_run(run, out, err);
    if (t->parsed()) return do_mlp(mlp_dir, mlp, out);
  } catch (...) {
    return exit_code_for(std::current_exception(), err);
  }
  return kExitInternal;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace sparsekit
