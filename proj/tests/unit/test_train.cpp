#include "tod/corpus/synthetic.hpp"
#include "tod/corpus/text.hpp"
#include "tod/registry/registry.hpp"
#include "tod/train/examples.hpp"
#include "tod/train/fit.hpp"
#include "tod/train/metrics.hpp"
#include "tod/train/simulate.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>
#include <set>

using namespace tod;
using namespace tod::train;

namespace {

struct DeskFixture {
  corpus::SyntheticConfig config = corpus::desk_config(120);
  std::vector<corpus::Dialogue> dialogues = corpus::generate_synthetic(config, 4);
  corpus::Vocab vocab = corpus::build_vocab(dialogues, 2000);
  registry::Pool pool = registry::pool_from_gold(corpus::gold_bank(config));
};

model::RankerConfig small_config(int vocab_size) {
  model::RankerConfig c;
  c.encoder.layers = 1;
  c.encoder.heads = 2;
  c.encoder.model_dim = 16;
  c.encoder.ffn_dim = 32;
  c.encoder.vocab_size = vocab_size;
  c.encoder.dropout = 0.0;
  c.history_codes = 2;
  c.feature_codes = 2;
  c.history_len = 64;
  c.feature_len = 16;
  c.response_len = 24;
  return c;
}

// Five templates, each triggered by its own history token.
std::vector<TrainingExample> separable(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TrainingExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = int(rng() % 5);
    TrainingExample ex;
    ex.history = {corpus::Vocab::kUserStart, 10 + cls};
    for (int c = 0; c < 5; ++c) ex.candidates.push_back({20 + 2 * c, 21 + 2 * c});
    ex.positive = std::size_t(cls);
    out.push_back(std::move(ex));
  }
  return out;
}

FeedbackEvent event(const std::string& session, int turn, std::vector<int> shown, Outcome o, std::optional<int> chosen) {
  FeedbackEvent e;
  e.session_id = session;
  e.turn_index = turn;
  e.shown_template_ids = std::move(shown);
  e.outcome = o;
  e.chosen_template_id = chosen;
  e.timestamp = 1000 + turn;
  e.history = {{corpus::Speaker::kUser, "i want to return my order"}};
  e.features.set("prime_member", "yes");
  return e;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("sst examples have distinct candidates and a gold positive") {
  DeskFixture fx;
  const auto ex = make_sst_examples(fx.dialogues, fx.vocab, 29, 7);
  std::size_t agent_turns = 0;
  for (const auto& d : fx.dialogues) agent_turns += d.agent_turn_count();
  REQUIRE(ex.size() == agent_turns);
  std::set<std::size_t> slots;
  for (const auto& e : ex) {
    REQUIRE(e.candidates.size() == 30);
    CHECK(std::set<corpus::TokenIds>(e.candidates.begin(), e.candidates.end()).size() == 30);
    CHECK(e.provenance == Provenance::kSst);
    slots.insert(e.positive);
  }
  CHECK(slots.size() > 20);
  const auto contexts = corpus::explode_dialogue(fx.dialogues[0], fx.vocab, {});
  CHECK(ex[0].candidates[ex[0].positive] == corpus::encode_text(contexts[0].gold_response_text, fx.vocab));
  CHECK(ex[0].history == contexts[0].history_tokens);
  CHECK(ex == make_sst_examples(fx.dialogues, fx.vocab, 29, 7));
  CHECK_FALSE(ex == make_sst_examples(fx.dialogues, fx.vocab, 29, 8));
  CHECK_THROWS_AS(make_sst_examples(fx.dialogues, fx.vocab, 0, 7), TrainError);
  CHECK_THROWS_AS(make_sst_examples(std::span(fx.dialogues).first(1), fx.vocab, 29, 7), TrainError);
}

TEST_CASE("feedback events validate and round trip") {
  const auto ok = event("s", 1, {1, 2, 3}, Outcome::kAccepted, 2);
  CHECK(feedback_violation(ok).empty());
  CHECK(feedback_from_json(feedback_to_json(ok)) == ok);
  CHECK_FALSE(feedback_violation(event("s", 1, {1, 2}, Outcome::kAccepted, 5)).empty());
  CHECK_FALSE(feedback_violation(event("s", 1, {1, 2}, Outcome::kSearched, 2)).empty());
  CHECK_FALSE(feedback_violation(event("s", 1, {1, 2}, Outcome::kFailure, 2)).empty());
  CHECK_FALSE(feedback_violation(event("s", 1, {1, 2}, Outcome::kAccepted, std::nullopt)).empty());
  CHECK_FALSE(feedback_violation(event("", 1, {1}, Outcome::kFailure, std::nullopt)).empty());
  CHECK_THROWS_AS(feedback_from_json("{\"session_id\":\"s\"}"), TrainError);

  const auto path = std::filesystem::temp_directory_path() / "tod_feedback_test.jsonl";
  std::filesystem::remove(path);
  append_feedback(ok, path);
  append_feedback(event("s", 2, {4}, Outcome::kFailure, std::nullopt), path);
  const auto log = load_feedback_log(path);
  REQUIRE(log.size() == 2);
  CHECK(log[0] == ok);
  std::filesystem::remove(path);
}

TEST_CASE("sft examples use pool candidates and shown suggestions as hard negatives") {
  DeskFixture fx;
  const std::vector<FeedbackEvent> events{
      event("a", 1, {0, 1, 2, 3}, Outcome::kAccepted, 1),
      event("a", 3, {10, 11, 12, 13}, Outcome::kSearched, 14),
      event("a", 5, {20, 21}, Outcome::kFailure, std::nullopt),
  };
  const auto build = make_sft_examples(events, fx.pool, fx.vocab, 29, 3);
  CHECK(build.accepted == 1);
  CHECK(build.searched == 1);
  CHECK(build.failures == 1);
  REQUIRE(build.examples.size() == 2);
  const auto& acc = build.examples[0];
  CHECK(acc.provenance == Provenance::kSftAccepted);
  CHECK(acc.candidates.size() == 30);
  CHECK(acc.candidate_ids[acc.positive] == 1);
  CHECK(acc.hard_negative_ids.empty());
  const auto& srch = build.examples[1];
  CHECK(srch.provenance == Provenance::kSftSearched);
  CHECK(srch.candidate_ids[srch.positive] == 14);
  CHECK(srch.hard_negative_ids == std::vector<int>{10, 11, 12, 13});
  for (int id : srch.hard_negative_ids) {
    CHECK(std::count(srch.candidate_ids.begin(), srch.candidate_ids.end(), id) == 1);
  }
  CHECK(std::set<int>(srch.candidate_ids.begin(), srch.candidate_ids.end()).size() == 30);
  CHECK(srch.history == corpus::flatten_history(events[1].history, fx.vocab));
  CHECK(srch.features == corpus::serialize_features(events[1].features, fx.vocab));

  CHECK(examples_to_jsonl(build.examples) ==
        examples_to_jsonl(make_sft_examples(events, fx.pool, fx.vocab, 29, 3).examples));
  const std::vector<FeedbackEvent> missing{event("b", 1, {1}, Outcome::kSearched, 12345)};
  CHECK_THROWS_AS(make_sft_examples(missing, fx.pool, fx.vocab, 29, 3), TrainError);
}

TEST_CASE("replay mixing keeps every sft example once") {
  const auto sft = separable(10, 1);
  auto sst = separable(30, 2);
  for (auto& e : sst) e.provenance = Provenance::kSst;
  std::vector<TrainingExample> tagged = sft;
  for (std::size_t i = 0; i < tagged.size(); ++i) tagged[i].candidate_ids = {int(i)};
  const auto mixed = mix_replay(tagged, sst, 4);
  CHECK(mixed.size() == 20);
  std::multiset<int> seen;
  for (const auto& e : mixed) {
    if (!e.candidate_ids.empty()) seen.insert(e.candidate_ids[0]);
  }
  CHECK(seen.size() == 10);
  CHECK(std::set<int>(seen.begin(), seen.end()).size() == 10);
  CHECK(mixed == mix_replay(tagged, sst, 4));
  CHECK(mix_replay({}, sst, 4).empty());
  CHECK_THROWS_AS(mix_replay(sst, tagged, 4), TrainError);
}

TEST_CASE("metrics by hand") {
  // Positive ranks 1, 2 and 4.
  const std::vector<std::vector<double>> scores{{3, 1, 0}, {1, 2, 0}, {0.5, 1, 2, 3}};
  const std::vector<std::size_t> pos{0, 0, 0};
  const auto m = metrics_from_scores(scores, pos, {1, 2});
  CHECK(m.recall(1) == doctest::Approx(1.0 / 3));
  CHECK(m.recall(2) == doctest::Approx(2.0 / 3));
  CHECK(m.mrr == doctest::Approx((1 + 0.5 + 0.25) / 3));
  CHECK_THROWS_AS(m.recall(5), TrainError);

  const std::vector<double> tie{1, 1, 1};
  CHECK(rank_of_positive(tie, 0) == 1);
  CHECK(rank_of_positive(tie, 2) == 3);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::vector<double>> random(10000, std::vector<double>(30));
  std::vector<std::size_t> rpos(10000);
  for (std::size_t i = 0; i < random.size(); ++i) {
    for (auto& s : random[i]) s = u(rng);
    rpos[i] = rng() % 30;
  }
  const auto r = metrics_from_scores(random, rpos);
  CHECK(std::abs(r.recall(1) - 1.0 / 30) < 0.01);
  CHECK(r.recall(1) <= r.recall(2));
  CHECK(r.recall(1) <= r.mrr);
}

TEST_CASE("fit learns a separable task and is deterministic") {
  const auto tr = separable(300, 1);
  const auto dev = separable(60, 2);
  FitConfig cfg;
  cfg.adam.lr = 0.003;
  cfg.batch_size = 16;
  cfg.max_epochs = 30;
  model::PolyRanker<float> a(small_config(40), 5);
  const auto result = fit(a, tr, dev, cfg);
  CHECK(result.best_dev.recall(1) == doctest::Approx(1.0));
  CHECK(evaluate(a, dev).recall(1) == doctest::Approx(1.0));
  CHECK(result.history.front().epoch == 0);

  cfg.max_epochs = 3;
  model::PolyRanker<float> b(small_config(40), 5);
  model::PolyRanker<float> c(small_config(40), 5);
  fit(b, tr, dev, cfg);
  fit(c, tr, dev, cfg);
  CHECK(b.fingerprint() == c.fingerprint());
}

TEST_CASE("fit stops after patience epochs without improvement") {
  const auto tr = separable(40, 1);
  const auto dev = separable(20, 2);
  FitConfig cfg;
  cfg.adam.lr = 1e-12;
  cfg.patience = 3;
  model::PolyRanker<float> m(small_config(40), 6);
  const auto result = fit(m, tr, dev, cfg);
  CHECK(result.stopped_early);
  CHECK(result.history.size() == 4);
  CHECK(result.best_epoch == 0);
}

TEST_CASE("fit aborts on a non-finite loss") {
  const auto tr = separable(20, 1);
  model::PolyRanker<float> m(small_config(40), 7);
  for (auto& p : m.params()) {
    if (p.name.rfind("fusion", 0) == 0) p.tensor->values()[0] = std::numeric_limits<float>::quiet_NaN();
  }
  FitConfig cfg;
  cfg.eval_initial = false;
  CHECK_THROWS_AS(fit(m, tr, tr, cfg), TrainError);
  CHECK_THROWS_AS(fit(m, {}, tr, cfg), TrainError);
}

TEST_CASE("history records round trip") {
  EpochRecord r;
  r.epoch = 2;
  r.train_loss = 0.25;
  r.dev.recall_at = {{1, 0.5}, {2, 0.75}};
  r.dev.mrr = 0.6;
  r.monitors["sst_test"] = r.dev;
  const auto back = epoch_from_json(epoch_to_json(r));
  CHECK(back.epoch == 2);
  CHECK(back.dev.recall(2) == 0.75);
  CHECK(back.monitors.at("sst_test").mrr == 0.6);
}

TEST_CASE("contact simulation with an oracle and with k equal to the pool") {
  DeskFixture fx;
  OracleRanker oracle(fx.pool);
  const auto report = simulate_contacts(oracle, fx.pool, fx.dialogues, 1);
  CHECK(report.turn_acceptance == 1.0);
  CHECK(report.contact_completion == 1.0);
  CHECK(report.missing_gold.empty());

  model::PolyRanker<float> m(small_config(int(fx.vocab.size())), 1);
  ModelRanker ranker(m, fx.vocab, fx.pool);
  const auto all = simulate_contacts(ranker, fx.pool, std::span(fx.dialogues).first(20), fx.pool.templates.size());
  CHECK(all.turn_acceptance == 1.0);

  registry::Pool partial = fx.pool;
  partial.templates.erase(partial.templates.begin());
  const auto gap = simulate_contacts(oracle, partial, fx.dialogues, 1);
  CHECK(gap.missing_gold.count(fx.pool.templates[0].id) == 1);
  CHECK(gap.turn_acceptance < 1.0);
}

TEST_CASE("collected feedback satisfies the event invariants") {
  DeskFixture fx;
  model::PolyRanker<float> m(small_config(int(fx.vocab.size())), 2);
  ModelRanker ranker(m, fx.vocab, fx.pool);
  CollectConfig cfg;
  cfg.explore = true;
  const auto events = collect_feedback(ranker, fx.pool, std::span(fx.dialogues).first(30), cfg);
  std::size_t accepted = 0, searched = 0;
  for (const auto& e : events) {
    CHECK(feedback_violation(e).empty());
    CHECK(e.shown_template_ids.size() <= cfg.k);
    accepted += e.outcome == Outcome::kAccepted;
    searched += e.outcome == Outcome::kSearched;
  }
  CHECK(searched > 0);
  const auto build = make_sft_examples(events, fx.pool, fx.vocab, 29, 1);
  CHECK(build.examples.size() == accepted + searched);
}

TEST_CASE("exploration reaches the tail impression target sooner") {
  ImpressionConfig cfg;
  cfg.target = 50;
  const auto greedy = requests_to_tail_target(cfg, false, 1);
  const auto explore = requests_to_tail_target(cfg, true, 1);
  CHECK(explore * 2 <= greedy);
}

}
