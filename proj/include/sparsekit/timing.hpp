// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

namespace sparsekit {

struct TimingOptions {
  int warmup = 5;
  int runs = 20;
};

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Nearest-rank percentile (q in [0, 1]) of an unsorted sample.
inline double percentile(std::vector<double> xs, double q) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(xs.size())));
  return xs[std::clamp<std::size_t>(rank, 1, xs.size()) - 1];
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// Runs `fn` warmup times untimed, then `runs` times timed individually.
template <typename F>
std::vector<double> time_runs(F&& fn, TimingOptions opts) {
  for (int i = 0; i < opts.warmup; ++i) fn();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(std::max(opts.runs, 0)));
  for (int i = 0; i < opts.runs; ++i) {
    const auto t0 = Clock::now();
    fn();
    out.push_back(seconds_since(t0));
  }
  return out;
}

template <typename F>
double median_time(F&& fn, TimingOptions opts) {
  return median(time_runs(fn, opts));
}

}  // namespace sparsekit
