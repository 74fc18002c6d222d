#pragma once

#include "tod/serve/service.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tod::serve {

struct LatencyRecord {
  std::size_t pool_size = 0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  std::size_t samples = 0;
  std::string hardware;
};

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

// Ordinary least squares of y on x.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

// Linear-interpolated percentile, q in [0, 1].
double percentile(std::vector<double> values, double q);

struct BenchConfig {
  std::vector<std::size_t> sizes = {250, 500, 1000, 2000, 4000};
  int repetitions = 5;  // passes over the request set per size
  int warmup = 1;       // untimed passes
};

struct BenchReport {
  std::vector<LatencyRecord> records;
  LineFit fit;  // p50_ms against pool size
};

// Times Service::rank on prefix truncations of `pool`. Each size gets its
// own snapshot, encoded before timing starts.
BenchReport bench_latency(std::shared_ptr<model::PolyRanker<float>> model, const corpus::Vocab& vocab,
                          const registry::Pool& pool, std::span<const RankRequest> requests,
                          const BenchConfig& config);

std::vector<RankRequest> load_requests(const std::filesystem::path& path);
std::string hardware_note();
std::string bench_to_json(const BenchReport& report);

}  // namespace tod::serve
