#include "tod/train/simulate.hpp"

#include <algorithm>
#include <random>

namespace tod::train {

ModelRanker::ModelRanker(model::PolyRanker<float>& model, const corpus::Vocab& vocab, const registry::Pool& pool,
                         const corpus::SequenceLimits& limits)
    : model_(model), vocab_(vocab), limits_(limits), fusion_(model.fusion_weights()) {
  std::vector<int> ids;
  std::vector<corpus::TokenIds> tokens;
  for (const auto& t : pool.templates) {
    ids.push_back(t.id);
    tokens.push_back(corpus::encode_text(t.text, vocab));
  }
  cache_ = model::encode_pool(model, ids, tokens);
}

std::vector<double> ModelRanker::score(const RankQuery& query, std::span<const std::size_t> rows) {
  if (rows.empty()) return {};
  auto history = corpus::flatten_history(query.history, vocab_);
  if (history.size() > limits_.history) history.erase(history.begin(), history.end() - std::ptrdiff_t(limits_.history));
  auto features = corpus::serialize_features(*query.features, vocab_);
  if (features.size() > limits_.features) features.resize(limits_.features);
  const auto ctx = model_.context(history, features);
  model::DMatrix responses(Eigen::Index(rows.size()), Eigen::Index(cache_.responses.cols()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    responses.row(Eigen::Index(i)) = cache_.responses.row(Eigen::Index(rows[i])).cast<double>();
  }
  return model::score_batch(ctx.z_h.cast<double>(), ctx.z_f.cast<double>(), responses, fusion_);
}

std::vector<double> OracleRanker::score(const RankQuery& query, std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(pool_.templates[r].id == query.gold_template ? 1.0 : 0.0);
  return out;
}

std::vector<model::Ranked> rank_eligible(Ranker& ranker, const registry::Pool& pool, const RankQuery& query) {
  const auto rows = registry::eligible_indices(pool, *query.features);
  const auto scores = ranker.score(query, rows);
  std::vector<model::Ranked> ranked;
  ranked.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) ranked.push_back({pool.templates[rows[i]].id, rows[i], scores[i]});
  model::sort_ranked(ranked);
  return ranked;
}

namespace {

void require_gold(const corpus::Dialogue& d) {
  if (d.gold_templates.size() != d.turns.size()) {
    throw TrainError("dialogue " + d.id + " carries no gold template annotations");
  }
}

}  // namespace

SimReport simulate_contacts(Ranker& ranker, const registry::Pool& pool, std::span<const corpus::Dialogue> corpus,
                            std::size_t k) {
  if (k == 0) throw TrainError("simulate_contacts: k must be at least 1");
  SimReport report;
  for (const auto& d : corpus) {
    require_gold(d);
    bool complete = true;
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      if (d.turns[t].speaker != corpus::Speaker::kAgent) continue;
      const int gold = d.gold_templates[t];
      ++report.turns;
      if (pool.find(gold) == nullptr) {
        report.missing_gold.insert(gold);
        complete = false;
        continue;
      }
      RankQuery q{std::span(d.turns).first(t), &d.profile, gold};
      const auto ranked = rank_eligible(ranker, pool, q);
      const auto top = std::min(k, ranked.size());
      const bool hit = std::any_of(ranked.begin(), ranked.begin() + std::ptrdiff_t(top),
                                   [&](const model::Ranked& r) { return r.template_id == gold; });
      if (hit) {
        ++report.accepted_turns;
      } else {
        complete = false;
      }
    }
    ++report.contacts;
    if (complete) ++report.completed_contacts;
  }
  if (report.turns > 0) report.turn_acceptance = double(report.accepted_turns) / double(report.turns);
  if (report.contacts > 0) report.contact_completion = double(report.completed_contacts) / double(report.contacts);
  return report;
}

std::vector<FeedbackEvent> collect_feedback(Ranker& ranker, const registry::Pool& pool,
                                            std::span<const corpus::Dialogue> corpus, const CollectConfig& config) {
  if (config.k == 0) throw TrainError("collect_feedback: k must be at least 1");
  std::mt19937_64 rng(config.seed);
  std::vector<FeedbackEvent> events;
  std::int64_t clock = 0;
  for (const auto& d : corpus) {
    require_gold(d);
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      if (d.turns[t].speaker != corpus::Speaker::kAgent) continue;
      const int gold = d.gold_templates[t];
      RankQuery q{std::span(d.turns).first(t), &d.profile, gold};
      const auto ranked = rank_eligible(ranker, pool, q);
      const auto shown = model::select_suggestions(ranked, config.k, config.explore, config.temperature, rng);

      FeedbackEvent e;
      e.session_id = d.id;
      e.turn_index = int(t);
      e.timestamp = ++clock;
      e.history.assign(d.turns.begin(), d.turns.begin() + std::ptrdiff_t(t));
      e.features = d.profile;
      for (const auto& s : shown) e.shown_template_ids.push_back(s.ranked.template_id);
      const bool was_shown = std::find(e.shown_template_ids.begin(), e.shown_template_ids.end(), gold) !=
                             e.shown_template_ids.end();
      const bool eligible = std::any_of(ranked.begin(), ranked.end(),
                                        [&](const model::Ranked& r) { return r.template_id == gold; });
      if (was_shown) {
        e.outcome = Outcome::kAccepted;
        e.chosen_template_id = gold;
      } else if (eligible) {
        e.outcome = Outcome::kSearched;
        e.chosen_template_id = gold;
      } else {
        e.outcome = Outcome::kFailure;
      }
      events.push_back(std::move(e));
    }
  }
  return events;
}

std::size_t requests_to_tail_target(const ImpressionConfig& config, bool explore, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, config.noise);
  std::size_t tail_hits = 0;
  for (std::size_t n = 1; n <= config.max_requests; ++n) {
    const double scores[2] = {config.head_score + noise(rng), config.tail_score + noise(rng)};
    const std::size_t shown =
        explore ? model::sample_gumbel(scores, config.temperature, rng) : (scores[1] > scores[0] ? 1 : 0);
    if (shown == 1 && ++tail_hits >= config.target) return n;
  }
  return config.max_requests + 1;
}

}  // namespace tod::train
