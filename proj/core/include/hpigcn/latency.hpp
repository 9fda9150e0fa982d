#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace hpigcn {

inline constexpr std::size_t kMinWarmup = 5;
inline constexpr std::size_t kMinIterations = 20;

struct LatencyStats {
  std::size_t warmup = 0;
  std::size_t iterations = 0;
  double median_ms = 0.0;
  double p10_ms = 0.0;
  double p90_ms = 0.0;
  std::vector<double> samples_ms;  // in measurement order
};

/// Linear-interpolated quantile, q in [0, 1]. `samples` need not be sorted.
double quantile(std::span<const double> samples, double q);

LatencyStats summarize(std::size_t warmup, std::vector<double> samples_ms);

struct BenchCase {
  std::string name;
  std::function<void()> run;
};

/// Runs every case round-robin so slow drifts (thermal, frequency scaling)
/// hit all cases alike: `warmup` untimed rounds, then `iterations` timed
/// ones. Each timed round starts one case later than the previous one.
/// Throws ConfigError below kMinWarmup / kMinIterations.
std::vector<LatencyStats> measure_interleaved(std::span<const BenchCase> cases,
                                              std::size_t warmup, std::size_t iterations);

struct BenchReport {
  std::string arch;       // "rp" or "op"
  std::size_t kmax = 0;
  std::string structure;  // "train" or "fused"
  std::size_t batch = 0;
  std::size_t frames = 0;
  std::string dtype;      // "f32" or "f64"
  int threads = 1;
  LatencyStats stats;
};

/// Field names emitted by to_json, in order.
std::span<const char* const> bench_report_fields();

/// One JSON object; samples are omitted.
std::string to_json(const BenchReport& report);

}  // namespace hpigcn
