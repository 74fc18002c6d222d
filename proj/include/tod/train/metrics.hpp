#pragma once

#include "tod/model/poly_ranker.hpp"
#include "tod/train/examples.hpp"

#include <map>
#include <span>
#include <vector>

namespace tod::train {

struct Metrics {
  std::map<int, double> recall_at;
  double mrr = 0.0;
  double loss = 0.0;  // mean per-example binary cross-entropy
  std::size_t count = 0;

  double recall(int k) const;
};

// 1 + number of candidates scoring above the positive + number scoring
// equal to it at a lower index.
std::size_t rank_of_positive(std::span<const double> scores, std::size_t positive);

// Metrics from per-example score vectors; `ks` defaults to {1, 2, 5, 10}.
Metrics metrics_from_scores(const std::vector<std::vector<double>>& scores, std::span<const std::size_t> positives,
                            std::vector<int> ks = {});

// Scores every candidate of every example with the frozen model. Response
// vectors are cached by token sequence across examples.
std::vector<std::vector<double>> score_examples(model::PolyRanker<float>& model,
                                                std::span<const TrainingExample> examples);

Metrics evaluate(model::PolyRanker<float>& model, std::span<const TrainingExample> examples, std::vector<int> ks = {});

std::string metrics_to_json(const Metrics& m);

}  // namespace tod::train
