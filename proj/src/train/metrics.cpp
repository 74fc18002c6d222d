#include "tod/train/metrics.hpp"

#include "tod/model/inference.hpp"
#include "tod/nn/tape.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>

namespace tod::train {

double Metrics::recall(int k) const {
  auto it = recall_at.find(k);
  if (it == recall_at.end()) throw TrainError("recall@" + std::to_string(k) + " was not computed");
  return it->second;
}

std::size_t rank_of_positive(std::span<const double> scores, std::size_t positive) {
  const double s = scores[positive];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > s || (scores[i] == s && i < positive)) ++rank;
  }
  return rank;
}

Metrics metrics_from_scores(const std::vector<std::vector<double>>& scores, std::span<const std::size_t> positives,
                            std::vector<int> ks) {
  if (scores.size() != positives.size()) throw TrainError("metrics_from_scores: size mismatch");
  if (ks.empty()) ks = {1, 2, 5, 10};
  Metrics m;
  m.count = scores.size();
  for (int k : ks) m.recall_at[k] = 0.0;
  if (scores.empty()) return m;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const std::size_t r = rank_of_positive(scores[i], positives[i]);
    for (auto& [k, v] : m.recall_at) {
      if (r <= std::size_t(k)) v += 1.0;
    }
    m.mrr += 1.0 / double(r);
    m.loss += nn::bce_with_logits_value<double>(scores[i], positives[i]);
  }
  const double n = double(scores.size());
  for (auto& [k, v] : m.recall_at) v /= n;
  m.mrr /= n;
  m.loss /= n;
  return m;
}

std::vector<std::vector<double>> score_examples(model::PolyRanker<float>& model,
                                                std::span<const TrainingExample> examples) {
  const auto fusion = model.fusion_weights();
  std::map<corpus::TokenIds, nn::RowVector<double>> cache;
  std::vector<std::vector<double>> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    const auto ctx = model.context(ex.history, ex.features);
    model::DMatrix responses(Eigen::Index(ex.candidates.size()), Eigen::Index(model.dim()));
    for (std::size_t c = 0; c < ex.candidates.size(); ++c) {
      auto it = cache.find(ex.candidates[c]);
      if (it == cache.end()) {
        it = cache.emplace(ex.candidates[c], model.response_vector(ex.candidates[c]).cast<double>()).first;
      }
      responses.row(Eigen::Index(c)) = it->second;
    }
    out.push_back(model::score_batch(ctx.z_h.cast<double>(), ctx.z_f.cast<double>(), responses, fusion));
  }
  return out;
}

Metrics evaluate(model::PolyRanker<float>& model, std::span<const TrainingExample> examples, std::vector<int> ks) {
  std::vector<std::size_t> positives;
  positives.reserve(examples.size());
  for (const auto& ex : examples) positives.push_back(ex.positive);
  return metrics_from_scores(score_examples(model, examples), positives, std::move(ks));
}

std::string metrics_to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json recall = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.recall_at) recall[std::to_string(k)] = v;
  j["recall_at"] = std::move(recall);
  j["mrr"] = m.mrr;
  j["loss"] = m.loss;
  j["count"] = m.count;
  return j.dump();
}

}  // namespace tod::train
