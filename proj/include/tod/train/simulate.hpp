#pragma once

#include "tod/corpus/text.hpp"
#include "tod/model/inference.hpp"
#include "tod/registry/registry.hpp"
#include "tod/train/examples.hpp"

#include <set>
#include <span>
#include <vector>

namespace tod::train {

struct RankQuery {
  std::span<const corpus::Turn> history;
  const corpus::FeatureMap* features = nullptr;
  int gold_template = corpus::kNoTemplate;  // visible to oracles only
};

// Scores a subset of pool rows for one context.
class Ranker {
 public:
  virtual ~Ranker() = default;
  virtual std::vector<double> score(const RankQuery& query, std::span<const std::size_t> rows) = 0;
};

class ModelRanker : public Ranker {
 public:
  ModelRanker(model::PolyRanker<float>& model, const corpus::Vocab& vocab, const registry::Pool& pool,
              const corpus::SequenceLimits& limits = {});
  std::vector<double> score(const RankQuery& query, std::span<const std::size_t> rows) override;

 private:
  model::PolyRanker<float>& model_;
  const corpus::Vocab& vocab_;
  corpus::SequenceLimits limits_;
  model::PoolCache cache_;
  model::PolyRanker<float>::FusionWeights fusion_;
};

// Scores the gold template 1 and everything else 0.
class OracleRanker : public Ranker {
 public:
  explicit OracleRanker(const registry::Pool& pool) : pool_(pool) {}
  std::vector<double> score(const RankQuery& query, std::span<const std::size_t> rows) override;

 private:
  const registry::Pool& pool_;
};

// Eligible pool rows for the features, ranked best first.
std::vector<model::Ranked> rank_eligible(Ranker& ranker, const registry::Pool& pool, const RankQuery& query);

struct SimReport {
  double turn_acceptance = 0.0;
  double contact_completion = 0.0;
  std::size_t turns = 0;
  std::size_t accepted_turns = 0;
  std::size_t contacts = 0;
  std::size_t completed_contacts = 0;
  std::set<int> missing_gold;  // gold ids absent from the pool; their turns never accept
};

// Replays every dialogue; a turn accepts when its gold template is in the
// top k of the constraint-filtered pool. Throws TrainError on a corpus
// without gold annotations.
SimReport simulate_contacts(Ranker& ranker, const registry::Pool& pool, std::span<const corpus::Dialogue> corpus,
                            std::size_t k);

struct CollectConfig {
  std::size_t k = 4;
  bool explore = false;
  double temperature = 1.0;
  std::uint64_t seed = 1;
};

// Scripted agents: accept the gold template when it is shown, search for it
// when it is eligible but not shown, report a failure otherwise.
std::vector<FeedbackEvent> collect_feedback(Ranker& ranker, const registry::Pool& pool,
                                            std::span<const corpus::Dialogue> corpus, const CollectConfig& config);

struct ImpressionConfig {
  double head_score = 1.0;
  double tail_score = 0.0;
  double noise = 0.5;  // per-request Gaussian perturbation of both scores
  double temperature = 1.0;
  std::size_t target = 100;  // tail impressions to reach
  std::size_t max_requests = 1'000'000;
};

// Requests served until the tail arm has `target` top-slot impressions;
// max_requests + 1 when it never gets there.
std::size_t requests_to_tail_target(const ImpressionConfig& config, bool explore, std::uint64_t seed);

}  // namespace tod::train
