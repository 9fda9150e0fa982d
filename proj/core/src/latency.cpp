#include "hpigcn/latency.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "hpigcn/errors.hpp"

namespace hpigcn {

double quantile(std::span<const double> samples, double q) {
  if (samples.empty()) throw ConfigError("quantile of an empty sample");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

LatencyStats summarize(std::size_t warmup, std::vector<double> samples_ms) {
  LatencyStats s;
  s.warmup = warmup;
  s.iterations = samples_ms.size();
  s.median_ms = quantile(samples_ms, 0.5);
  s.p10_ms = quantile(samples_ms, 0.1);
  s.p90_ms = quantile(samples_ms, 0.9);
  s.samples_ms = std::move(samples_ms);
  return s;
}

std::vector<LatencyStats> measure_interleaved(std::span<const BenchCase> cases,
                                              std::size_t warmup, std::size_t iterations) {
  if (warmup < kMinWarmup) {
    throw ConfigError("bench: at least " + std::to_string(kMinWarmup) +
                      " warmup iterations required");
  }
  if (iterations < kMinIterations) {
    throw ConfigError("bench: at least " + std::to_string(kMinIterations) +
                      " measured iterations required");
  }
  for (std::size_t w = 0; w < warmup; ++w) {
    for (const auto& c : cases) c.run();
  }
  std::vector<std::vector<double>> samples(cases.size());
  for (auto& s : samples) s.reserve(iterations);
  // Each round starts one case later, so no case always follows the same neighbour.
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t j = 0; j < cases.size(); ++j) {
      const std::size_t i = (it + j) % cases.size();
      const auto start = std::chrono::steady_clock::now();
      cases[i].run();
      const auto stop = std::chrono::steady_clock::now();
      samples[i].push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    }
  }
  std::vector<LatencyStats> out;
  out.reserve(cases.size());
  for (auto& s : samples) out.push_back(summarize(warmup, std::move(s)));
  return out;
}

std::span<const char* const> bench_report_fields() {
  static constexpr std::array<const char*, 12> kFields = {
      "arch",   "kmax",  "structure", "batch",      "frames", "dtype", "threads",
      "warmup", "iterations", "median_ms", "p10_ms", "p90_ms"};
  return kFields;
}

std::string to_json(const BenchReport& r) {
  nlohmann::ordered_json j;
  j["arch"] = r.arch;
  j["kmax"] = r.kmax;
  j["structure"] = r.structure;
  j["batch"] = r.batch;
  j["frames"] = r.frames;
  j["dtype"] = r.dtype;
  j["threads"] = r.threads;
  j["warmup"] = r.stats.warmup;
  j["iterations"] = r.stats.iterations;
  j["median_ms"] = r.stats.median_ms;
  j["p10_ms"] = r.stats.p10_ms;
  j["p90_ms"] = r.stats.p90_ms;
  return j.dump();
}

}  // namespace hpigcn
