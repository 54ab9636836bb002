// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparsekit/bench.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "sparsekit/autotune.hpp"
#include "sparsekit/conv.hpp"
#include "sparsekit/matrix_io.hpp"
#include "sparsekit/runtime.hpp"
#include "sparsekit/tolerance.hpp"

namespace sparsekit {

std::string_view to_string(SuiteKind kind) { return kind == SuiteKind::Spmm ? "spmm" : "conv"; }

SuiteKind parse_suite_kind(std::string_view name) {
  if (name == "spmm") return SuiteKind::Spmm;
  if (name == "conv") return SuiteKind::Conv;
  throw ConfigError("unknown suite kind '" + std::string(name) + "' (expected spmm or conv)");
}

void SuiteSpec::validate() const {
  auto positive = [](const std::vector<Index>& v, const char* what) {
    if (v.empty()) throw ConfigError(std::string("suite: no ") + what);
    for (Index x : v)
      if (x < 1) throw ConfigError(std::string("suite: ") + what + " must be >= 1");
  };
  if (kind == SuiteKind::Spmm) {
    positive(sizes, "sizes");
    positive(b_cols, "b_cols");
  } else {
    positive(channels, "channels");
    positive(images, "images");
  }
  if (sparsities.empty()) throw ConfigError("suite: no sparsities");
  for (double s : sparsities)
    if (!(s >= 0.0 && s < 1.0)) throw ConfigError("suite: sparsity must be in [0, 1)");
  if (seeds < 1) throw ConfigError("suite: seeds must be >= 1");
  if (threads < 1) throw ConfigError("suite: threads must be >= 1");
  if (timing.runs < 1 || timing.warmup < 0) throw ConfigError("suite: need runs >= 1 and warmup >= 0");
}

std::size_t SuiteSpec::problem_count() const {
  const std::size_t grid = kind == SuiteKind::Spmm ? sizes.size() * b_cols.size() : channels.size() * images.size();
  return grid * sparsities.size() * static_cast<std::size_t>(seeds);
}

SuiteSpec SuiteSpec::desk(SuiteKind kind) {
  SuiteSpec s;
  s.kind = kind;
  if (kind == SuiteKind::Spmm) {
    s.sizes = {64, 256, 512};
    s.b_cols = {32, 128};
    s.sparsities = {0.7, 0.8, 0.9, 0.95};
    s.seeds = 3;
  } else {
    s.channels = {32, 64};
    s.images = {7, 14, 28};
    s.sparsities = {0.9, 0.95};
    s.seeds = 2;
  }
  return s;
}

SuiteSpec SuiteSpec::full(SuiteKind kind) {
  SuiteSpec s;
  s.kind = kind;
  if (kind == SuiteKind::Spmm) {
    s.sizes = {256, 512, 1024, 2048};
    s.b_cols = {128, 512, 2048};
    s.sparsities = {0.7, 0.8, 0.9, 0.95};
    s.seeds = 16;
  } else {
    s.channels = {32, 64, 128, 256};
    s.images = {7, 14, 28, 56};
    s.sparsities = {0.9, 0.95};
    s.seeds = 1;
  }
  return s;
}

std::uint64_t problem_seed(SuiteKind kind, Index size, double sparsity, int seed) {
  std::uint64_t h = kind == SuiteKind::Spmm ? 0x5350'4d4dULL : 0x434f'4e56ULL;
  for (std::uint64_t part : {static_cast<std::uint64_t>(size), static_cast<std::uint64_t>(std::llround(sparsity * 1e4)),
                             static_cast<std::uint64_t>(seed)}) {
    h ^= part + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

namespace {

std::pair<Index, Index> split(Index total, int part, int parts) {
  return {static_cast<Index>(static_cast<std::int64_t>(total) * part / parts),
          static_cast<Index>(static_cast<std::int64_t>(total) * (part + 1) / parts)};
}

MicrokernelConfig choose_config(const SuiteSpec& spec, const CsrMatrix& a, Index b_cols) {
  if (spec.config) return *spec.config;
  const MicrokernelConfig base = default_config(b_cols);
  if (!spec.tune) return base;
  const auto space = default_tune_space(a.cols(), base.vector_width);
  return autotune(a, b_cols, space, {1, 5}).best;
}

struct Problem {
  BenchRecord record;
  CsrMatrix a;
  DenseMatrix dense_a;
  DenseMatrix b;                       // spmm B, or conv input
  std::optional<VirtualOperandPlan> plan;  // conv only
};

void run_problem(Problem& pr, const SuiteSpec& spec, WorkerPool& pool) {
  BenchRecord& rec = pr.record;
  const int parts = pool.size();
  const Index m = pr.a.rows();
  const MicrokernelConfig cfg = choose_config(spec, pr.a, rec.b_cols);
  rec.config = cfg.to_string();

  const auto kernel = lower_kernel(generate_kernel(pr.a, rec.b_cols, cfg), kNativeBackend);
  std::unique_ptr<BOperand> operand;
  if (pr.plan) {
    operand = std::make_unique<ConvOperand>(*pr.plan, pr.b);
  } else {
    operand = std::make_unique<DenseOperand>(pr.b);
  }
  DenseMatrix c(m, rec.b_cols);
  auto run_kernel = [&] {
    pool.run([&](int w) {
      const auto [t0, t1] = split(kernel->row_tiles(), w, parts);
      if (t0 < t1) kernel->run(*operand, c, {t0, t1});
    });
  };

  // Correctness first.
  run_kernel();
  const DenseMatrix b_mat = pr.plan ? im2col(*pr.plan, pr.b) : pr.b;
  const OracleProduct oracle = oracle_product(pr.dense_a, b_mat);
  const Comparison cmp = compare_scaled(c, oracle.value, oracle.magnitude);
  rec.correct = cmp.passed;
  if (!cmp.passed) {
    rec.error = cmp.summary();
    return;
  }

  // Baselines include the im2col cost for conv.
  DenseMatrix scratch(m, rec.b_cols);
  auto operand_matrix = [&]() -> DenseMatrix { return pr.plan ? im2col(*pr.plan, pr.b) : DenseMatrix(); };
  auto run_dense = [&] {
    const DenseMatrix cols = operand_matrix();
    const DenseMatrix& bm = pr.plan ? cols : pr.b;
    pool.run([&](int w) {
      const auto [r0, r1] = split(m, w, parts);
      dense_matmul_f32_rows(pr.dense_a, bm, scratch, r0, r1);
    });
  };
  auto run_csr = [&] {
    const DenseMatrix cols = operand_matrix();
    const DenseMatrix& bm = pr.plan ? cols : pr.b;
    pool.run([&](int w) {
      const auto [r0, r1] = split(m, w, parts);
      csr_spmm_rows(pr.a, bm, scratch, r0, r1);
    });
  };
  rec.time_baseline_dense = median_time(run_dense, spec.timing);
  rec.time_baseline_csr = median_time(run_csr, spec.timing);
  rec.time_kernel = median_time(run_kernel, spec.timing);
  rec.speedup_dense = rec.time_baseline_dense / rec.time_kernel;
  rec.speedup_csr = rec.time_baseline_csr / rec.time_kernel;
}

BenchRecord make_record(SuiteKind kind, Index m, Index n, Index b_cols, double sparsity, int seed) {
  BenchRecord r;
  r.kind = kind;
  r.m = m;
  r.n = n;
  r.b_cols = b_cols;
  r.sparsity = sparsity;
  r.seed = seed;
  return r;
}

}  // namespace

std::vector<BenchRecord> run_suite(const SuiteSpec& spec) {
  spec.validate();
  WorkerPool pool(spec.threads);
  std::vector<BenchRecord> records;
  records.reserve(spec.problem_count());
  auto finish = [&](Problem& pr) {
    pr.record.threads = spec.threads;
    try {
      run_problem(pr, spec, pool);
    } catch (const Error& e) {
      pr.record.correct = false;
      pr.record.error = e.what();
    }
    records.push_back(std::move(pr.record));
  };

  if (spec.kind == SuiteKind::Spmm) {
    for (Index size : spec.sizes)
      for (double sp : spec.sparsities)
        for (Index w : spec.b_cols)
          for (int seed = 0; seed < spec.seeds; ++seed) {
            const std::uint64_t ps = problem_seed(spec.kind, size, sp, seed);
            Problem pr;
            pr.record = make_record(spec.kind, size, size, w, sp, seed);
            pr.a = generate_synthetic(size, size, sp, ps);
            pr.dense_a = csr_to_dense(pr.a);
            pr.b = random_dense(size, w, ps ^ 0xbbbbULL);
            finish(pr);
          }
  } else {
    for (Index ch : spec.channels)
      for (Index img : spec.images)
        for (double sp : spec.sparsities)
          for (int seed = 0; seed < spec.seeds; ++seed) {
            const std::uint64_t ps = problem_seed(spec.kind, ch * 1000 + img, sp, seed);
            const ConvSpec cs{ch, ch, 3, 3, img, img, 1, 1};
            Problem pr;
            pr.record = make_record(spec.kind, ch, cs.reduction(), cs.out_pixels(), sp, seed);
            pr.a = flatten_filters(generate_synthetic_filters(ch, ch, 3, 3, sp, ps));
            pr.dense_a = csr_to_dense(pr.a);
            pr.b = random_dense(ch, cs.in_pixels(), ps ^ 0xbbbbULL);
            pr.plan.emplace(cs);
            finish(pr);
          }
  }
  return records;
}

double geomean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double log_sum = 0.0;
  for (double x : xs) log_sum += std::log(x);
  return std::exp(log_sum / static_cast<double>(xs.size()));
}

SuiteSummary summarize(std::span<const BenchRecord> records) {
  if (records.empty()) throw ConfigError("summarize: no records");
  for (const auto& r : records) {
    if (!r.correct) throw ConfigError("summarize: record failed its correctness check: " + r.error);
  }
  SuiteSummary s;
  s.records = static_cast<int>(records.size());
  std::map<double, std::pair<std::vector<double>, std::vector<double>>> groups;
  std::vector<double> all_dense, all_csr;
  for (const auto& r : records) {
    groups[r.sparsity].first.push_back(r.speedup_dense);
    groups[r.sparsity].second.push_back(r.speedup_csr);
    all_dense.push_back(r.speedup_dense);
    all_csr.push_back(r.speedup_csr);
  }
  for (const auto& [sp, g] : groups) {
    s.by_sparsity.push_back({sp, static_cast<int>(g.first.size()), geomean(g.first), geomean(g.second)});
  }
  s.geomean_speedup_dense = geomean(all_dense);
  s.geomean_speedup_csr = geomean(all_csr);
  std::sort(all_dense.begin(), all_dense.end());
  for (std::size_t i = 0; i < all_dense.size(); ++i) {
    s.cdf.emplace_back(all_dense[i], static_cast<double>(i + 1) / static_cast<double>(all_dense.size()));
  }
  return s;
}

std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

void write_records_csv(std::span<const BenchRecord> records, std::ostream& out) {
  out << kBenchCsvHeader << '\n';
  for (const auto& r : records) {
    out << to_string(r.kind) << ',' << r.m << ',' << r.n << ',' << r.b_cols << ',' << format_double(r.sparsity) << ','
        << r.seed << ',' << r.threads << ',' << r.config << ',' << format_double(r.time_baseline_dense) << ','
        << format_double(r.time_baseline_csr) << ',' << format_double(r.time_kernel) << ','
        << format_double(r.speedup_dense) << ',' << format_double(r.speedup_csr) << ',' << (r.correct ? 1 : 0)
        << '\n';
  }
}

namespace {

template <typename T>
T parse_field(const std::string& s, const char* column) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw FormatError(std::string("bench csv: bad ") + column + " value '" + s + "'");
  }
  return v;
}

}  // namespace

std::vector<BenchRecord> read_records_csv(std::istream& in) {
  const std::string header = io_detail::read_line(in, "bench csv header");
  if (header != kBenchCsvHeader) throw FormatError("bench csv: unexpected header '" + header + "'");
  std::vector<BenchRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) {
      f.push_back(line.substr(start, pos - start));
    }
    f.push_back(line.substr(start));
    if (f.size() != 14) throw FormatError("bench csv: expected 14 columns, got " + std::to_string(f.size()));
    BenchRecord r;
    try {
      r.kind = parse_suite_kind(f[0]);
    } catch (const ConfigError& e) {
      throw FormatError(std::string("bench csv: ") + e.what());
    }
    r.m = parse_field<Index>(f[1], "m");
    r.n = parse_field<Index>(f[2], "n");
    r.b_cols = parse_field<Index>(f[3], "b_cols");
    r.sparsity = parse_field<double>(f[4], "sparsity");
    r.seed = parse_field<int>(f[5], "seed");
    r.threads = parse_field<int>(f[6], "threads");
    r.config = f[7];
    r.time_baseline_dense = parse_field<double>(f[8], "time_baseline_dense");
    r.time_baseline_csr = parse_field<double>(f[9], "time_baseline_csr");
    r.time_kernel = parse_field<double>(f[10], "time_kernel");
    r.speedup_dense = parse_field<double>(f[11], "speedup_dense");
    r.speedup_csr = parse_field<double>(f[12], "speedup_csr");
    const int correct = parse_field<int>(f[13], "correct");
    if (correct != 0 && correct != 1) throw FormatError("bench csv: correct must be 0 or 1");
    r.correct = correct == 1;
    out.push_back(std::move(r));
  }
  return out;
}

void write_summary_csv(const SuiteSummary& s, std::ostream& geomean_out, std::ostream& cdf_out) {
  geomean_out << kGeomeanCsvHeader << '\n';
  for (const auto& g : s.by_sparsity) {
    geomean_out << format_double(g.sparsity) << ',' << g.count << ',' << format_double(g.geomean_speedup_dense) << ','
                << format_double(g.geomean_speedup_csr) << '\n';
  }
  cdf_out << kCdfCsvHeader << '\n';
  for (const auto& [x, f] : s.cdf) cdf_out << format_double(x) << ',' << format_double(f) << '\n';
}

std::string summary_json(const SuiteSummary& s, std::span<const BenchRecord> records) {
  nlohmann::json groups = nlohmann::json::array();
  bool nondecreasing = true;
  for (std::size_t i = 0; i < s.by_sparsity.size(); ++i) {
    const auto& g = s.by_sparsity[i];
    groups.push_back({{"sparsity", g.sparsity},
                      {"count", g.count},
                      {"geomean_speedup_dense", g.geomean_speedup_dense},
                      {"geomean_speedup_csr", g.geomean_speedup_csr}});
    if (i > 0 && g.geomean_speedup_dense < s.by_sparsity[i - 1].geomean_speedup_dense) nondecreasing = false;
  }
  const auto correct = std::count_if(records.begin(), records.end(), [](const auto& r) { return r.correct; });
  const nlohmann::json j{{"records", records.size()},
                         {"correct", correct},
                         {"geomean_speedup_dense", s.geomean_speedup_dense},
                         {"geomean_speedup_csr", s.geomean_speedup_csr},
                         {"geomean_dense_nondecreasing_in_sparsity", nondecreasing},
                         {"by_sparsity", std::move(groups)}};
  return j.dump();
}

}  // namespace sparsekit
