#pragma once

#include "tod/model/poly_ranker.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace tod::model {

using DMatrix = nn::Matrix<double>;
using DVector = nn::RowVector<double>;

class FingerprintMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// a = softmax(z_r . z^T / sqrt(d)) . z
DVector cross_attend(const DMatrix& codes, const DVector& z_r);

// score = MLP([a_h | a_f]) . z_r
double fuse_and_score(const DVector& a_h, const DVector& a_f, const DVector& z_r,
                      const PolyRanker<float>::FusionWeights& fusion);

// Scores of every row of `responses` ([n x d]) in one batched pass.
std::vector<double> score_batch(const DMatrix& z_h, const DMatrix& z_f, const DMatrix& responses,
                                const PolyRanker<float>::FusionWeights& fusion);

struct PoolCache {
  std::vector<int> template_ids;
  nn::Matrix<float> responses;  // one row per template id, in order
  std::uint32_t fingerprint = 0;

  std::size_t size() const { return template_ids.size(); }
};

// Encodes every text with the response encoder. Throws on an empty pool.
PoolCache encode_pool(PolyRanker<float>& model, const std::vector<int>& ids,
                      const std::vector<corpus::TokenIds>& responses);

// Binary layout: magic "TODCACHE", u32 fingerprint, u64 rows, u64 cols,
// i32 ids[rows], f32 values[rows*cols].
void save_cache(const PoolCache& cache, const std::filesystem::path& path);
PoolCache load_cache(const std::filesystem::path& path);

// Reuses the cache file when its fingerprint matches the model, otherwise
// re-encodes and rewrites it.
PoolCache load_or_encode_pool(PolyRanker<float>& model, std::uint32_t fingerprint,
                              const std::vector<int>& ids, const std::vector<corpus::TokenIds>& responses,
                              const std::filesystem::path& path);

struct Ranked {
  int template_id = 0;
  std::size_t row = 0;  // row in the cache
  double score = 0.0;
};

// Top k of every cached row, descending, ties by ascending template id. A k
// above the pool size is clamped. Throws FingerprintMismatch when the cache
// was built by a different model.
std::vector<Ranked> rank(const PolyRanker<float>::FusionWeights& fusion, const ContextEncoding<float>& context,
                         const PoolCache& cache, std::size_t k, std::uint32_t model_fingerprint);
// Same, restricted to the given cache rows.
std::vector<Ranked> rank_rows(const PolyRanker<float>::FusionWeights& fusion, const ContextEncoding<float>& context,
                              const PoolCache& cache, std::span<const std::size_t> rows, std::size_t k);

// Orders scored entries descending with ties by ascending template id.
void sort_ranked(std::vector<Ranked>& ranked);

// argmax_i (scores_i / temperature + g_i) with g_i standard Gumbel noise, a
// draw from softmax(scores / temperature).
std::size_t sample_gumbel(std::span<const double> scores, double temperature, std::mt19937_64& rng);
std::size_t sample_gumbel(std::span<const double> scores, double temperature, std::uint64_t seed);

struct Suggestion {
  Ranked ranked;
  bool explored = false;
};

// First k entries of `ranked` (already sorted). With explore set, position 1
// is one softmax(score / temperature) draw over every entry and the other
// slots follow in deterministic order, skipping the drawn one.
std::vector<Suggestion> select_suggestions(const std::vector<Ranked>& ranked, std::size_t k, bool explore,
                                           double temperature, std::mt19937_64& rng);

}  // namespace tod::model
