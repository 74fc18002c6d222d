#include "tod/model/inference.hpp"

#include <spdlog/spdlog.h>

#include <cstring>
#include <fstream>

namespace tod::model {
namespace {

constexpr char kCacheMagic[8] = {'T', 'O', 'D', 'C', 'A', 'C', 'H', 'E'};

template <typename V>
void put(std::ofstream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::ifstream& in) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(V))) throw std::runtime_error("truncated pool cache");
  return v;
}

}  // namespace

PoolCache encode_pool(PolyRanker<float>& model, const std::vector<int>& ids,
                      const std::vector<corpus::TokenIds>& responses) {
  if (ids.empty()) throw std::invalid_argument("encode_pool: empty pool");
  if (ids.size() != responses.size()) throw std::invalid_argument("encode_pool: ids and responses differ in length");
  PoolCache cache;
  cache.template_ids = ids;
  cache.responses.resize(Eigen::Index(ids.size()), model.dim());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    cache.responses.row(Eigen::Index(i)) = model.response_vector(responses[i]);
  }
  cache.fingerprint = model.fingerprint();
  return cache;
}

void save_cache(const PoolCache& cache, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write pool cache " + path.string());
  out.write(kCacheMagic, sizeof(kCacheMagic));
  put<std::uint32_t>(out, cache.fingerprint);
  put<std::uint64_t>(out, cache.responses.rows());
  put<std::uint64_t>(out, cache.responses.cols());
  for (int id : cache.template_ids) put<std::int32_t>(out, id);
  out.write(reinterpret_cast<const char*>(cache.responses.data()),
            std::streamsize(cache.responses.size() * sizeof(float)));
}

PoolCache load_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open pool cache " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCacheMagic, 8) != 0) {
    throw std::runtime_error("not a pool cache file: " + path.string());
  }
  PoolCache cache;
  cache.fingerprint = get<std::uint32_t>(in);
  const auto rows = get<std::uint64_t>(in);
  const auto cols = get<std::uint64_t>(in);
  cache.template_ids.resize(rows);
  for (auto& id : cache.template_ids) id = get<std::int32_t>(in);
  cache.responses.resize(Eigen::Index(rows), Eigen::Index(cols));
  if (!in.read(reinterpret_cast<char*>(cache.responses.data()), std::streamsize(rows * cols * sizeof(float)))) {
    throw std::runtime_error("truncated pool cache");
  }
  return cache;
}

PoolCache load_or_encode_pool(PolyRanker<float>& model, std::uint32_t fingerprint,
                              const std::vector<int>& ids, const std::vector<corpus::TokenIds>& responses,
                              const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) {
    try {
      PoolCache cache = load_cache(path);
      if (cache.fingerprint == fingerprint && cache.template_ids == ids) return cache;
      spdlog::info("pool cache {} is stale; re-encoding", path.string());
    } catch (const std::exception& e) {
      spdlog::warn("ignoring unreadable pool cache {}: {}", path.string(), e.what());
    }
  }
  PoolCache cache = encode_pool(model, ids, responses);
  save_cache(cache, path);
  return cache;
}

}  // namespace tod::model
