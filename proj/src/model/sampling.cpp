#include "tod/model/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tod::model {

std::size_t sample_gumbel(std::span<const double> scores, double temperature, std::mt19937_64& rng) {
  if (scores.empty()) throw std::invalid_argument("sample_gumbel: no scores");
  if (!(temperature > 0.0)) throw std::invalid_argument("sample_gumbel: temperature must be positive");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw std::invalid_argument("sample_gumbel: non-finite score");
    double u = unit(rng);
    while (u <= 0.0) u = unit(rng);
    const double g = -std::log(-std::log(u));
    const double v = scores[i] / temperature + g;
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  return best;
}

std::size_t sample_gumbel(std::span<const double> scores, double temperature, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_gumbel(scores, temperature, rng);
}

std::vector<Suggestion> select_suggestions(const std::vector<Ranked>& ranked, std::size_t k, bool explore,
                                           double temperature, std::mt19937_64& rng) {
  std::vector<Suggestion> out;
  if (ranked.empty() || k == 0) return out;
  k = std::min(k, ranked.size());
  std::size_t drawn = ranked.size();
  if (explore) {
    std::vector<double> scores(ranked.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) scores[i] = ranked[i].score;
    drawn = sample_gumbel(scores, temperature, rng);
    out.push_back({ranked[drawn], true});
  }
  for (std::size_t i = 0; i < ranked.size() && out.size() < k; ++i) {
    if (i != drawn) out.push_back({ranked[i], false});
  }
  return out;
}

}  // namespace tod::model
