#include "tod/serve/bench.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <thread>

namespace tod::serve {

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: need two or more paired points");
  const double n = double(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_line: x values are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += r * r;
  }
  f.r2 = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
  return f;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile: no values");
  std::sort(values.begin(), values.end());
  const double pos = q * double(values.size() - 1);
  const auto lo = std::size_t(pos);
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - double(lo)) * (values[hi] - values[lo]);
}

std::string hardware_note() {
  std::string model = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("model name", 0) == 0) {
      if (auto p = line.find(':'); p != std::string::npos) model = line.substr(p + 2);
      break;
    }
  }
  return model + ", " + std::to_string(std::max(1u, std::thread::hardware_concurrency())) + " threads";
}

BenchReport bench_latency(std::shared_ptr<model::PolyRanker<float>> model, const corpus::Vocab& vocab,
                          const registry::Pool& pool, std::span<const RankRequest> requests,
                          const BenchConfig& config) {
  if (requests.empty()) throw std::invalid_argument("bench_latency: no requests");
  if (config.repetitions < 1) throw std::invalid_argument("bench_latency: repetitions must be at least 1");
  const std::string hw = hardware_note();
  BenchReport report;
  for (std::size_t size : config.sizes) {
    if (size == 0 || size > pool.templates.size()) {
      throw std::invalid_argument("bench_latency: size " + std::to_string(size) + " outside pool of " +
                                  std::to_string(pool.templates.size()));
    }
    registry::Pool prefix;
    prefix.version = pool.version;
    prefix.templates.assign(pool.templates.begin(), pool.templates.begin() + std::ptrdiff_t(size));
    Service service(make_snapshot(model, vocab, std::move(prefix)), ServiceConfig{});
    for (int w = 0; w < config.warmup; ++w) {
      for (const auto& r : requests) service.rank(r);
    }
    std::vector<double> times;
    times.reserve(requests.size() * std::size_t(config.repetitions));
    for (int rep = 0; rep < config.repetitions; ++rep) {
      for (const auto& r : requests) {
        const auto t0 = std::chrono::steady_clock::now();
        service.rank(r);
        times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
      }
    }
    LatencyRecord rec{size, percentile(times, 0.5), percentile(times, 0.95), times.size(), hw};
    spdlog::info("pool {}: p50 {:.3f} ms, p95 {:.3f} ms", size, rec.p50_ms, rec.p95_ms);
    report.records.push_back(std::move(rec));
  }
  if (report.records.size() >= 2) {
    std::vector<double> x, y;
    for (const auto& r : report.records) {
      x.push_back(double(r.pool_size));
      y.push_back(r.p50_ms);
    }
    report.fit = fit_line(x, y);
  }
  return report;
}

std::vector<RankRequest> load_requests(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open requests " + path.string());
  std::vector<RankRequest> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      out.push_back(rank_request_from_json(line));
    } catch (const RequestError& e) {
      throw RequestError("requests line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string bench_to_json(const BenchReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json records = nlohmann::ordered_json::array();
  for (const auto& r : report.records) {
    records.push_back({{"pool_size", r.pool_size},
                       {"p50_ms", r.p50_ms},
                       {"p95_ms", r.p95_ms},
                       {"samples", r.samples},
                       {"hardware", r.hardware}});
  }
  j["records"] = std::move(records);
  j["fit"] = {{"slope_ms_per_template", report.fit.slope},
              {"intercept_ms", report.fit.intercept},
              {"r2", report.fit.r2}};
  return j.dump(2);
}

}  // namespace tod::serve
