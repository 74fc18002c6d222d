#include "tod/corpus/synthetic.hpp"
#include "tod/corpus/text.hpp"
#include "tod/serve/bench.hpp"
#include "tod/serve/http.hpp"
#include "tod/serve/service.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <thread>

using namespace tod;
using namespace tod::serve;
using nlohmann::json;

namespace {

model::RankerConfig tiny(int vocab_size) {
  model::RankerConfig c;
  c.encoder.layers = 1;
  c.encoder.heads = 2;
  c.encoder.model_dim = 16;
  c.encoder.ffn_dim = 32;
  c.encoder.vocab_size = vocab_size;
  c.encoder.dropout = 0.0;
  c.history_len = 64;
  c.feature_len = 16;
  c.response_len = 24;
  c.history_codes = 2;
  c.feature_codes = 2;
  return c;
}

registry::Pool small_pool() {
  registry::Pool pool;
  pool.version = 1;
  const std::vector<std::string> texts{
      "Refund card issued today.", "Your card is blocked.", "The refund is on its way.",
      "Anything else I can help with?", "Please confirm your card number.", "Thanks for waiting."};
  for (std::size_t i = 0; i < texts.size(); ++i) {
    registry::Template t;
    t.id = int(i) + 1;
    t.text = texts[i];
    pool.templates.push_back(t);
  }
  pool.templates[1].constraints.push_back({"card_status", {"blocked"}});
  return pool;
}

struct Fixture {
  corpus::Vocab vocab;
  std::shared_ptr<model::PolyRanker<float>> model;
  registry::Pool pool = small_pool();

  Fixture() {
    std::vector<std::string> words{"refund", "card", "issued", "today", "your", "is", "blocked", "the", "on",
                                   "its", "way", "anything", "else", "i", "can", "help", "with", "please",
                                   "confirm", "number", "thanks", "for", "waiting", "hi", "my", "lost", ".",
                                   "?", corpus::feature_token("card_status", "blocked"),
                                   corpus::feature_token("card_status", "active")};
    vocab = corpus::Vocab(words);
    model = std::make_shared<model::PolyRanker<float>>(tiny(int(vocab.size())), 3);
  }

  std::shared_ptr<const Snapshot> snapshot(std::uint64_t version = 1) {
    registry::Pool p = pool;
    p.version = version;
    return make_snapshot(model, vocab, p);
  }
};

RankRequest request(const std::string& session, const std::string& status) {
  RankRequest r;
  r.session_id = session;
  r.turns = {{corpus::Speaker::kUser, "hi my card is lost"}};
  r.features.set("card_status", status);
  return r;
}

std::vector<double> library_scores(Fixture& fx, const RankRequest& r, const std::vector<int>& ids) {
  const auto snap = fx.snapshot();
  const corpus::SequenceLimits limits;
  const auto ctx = fx.model->context(
      model::clip_history(corpus::flatten_history(r.turns, fx.vocab), int(limits.history)),
      model::clip_front(corpus::serialize_features(r.features, fx.vocab), int(limits.features)));
  const auto ranked = model::rank(snap->fusion, ctx, snap->cache, snap->cache.size(), snap->fingerprint);
  std::vector<double> out;
  for (int id : ids) {
    for (const auto& x : ranked) {
      if (x.template_id == id) out.push_back(x.score);
    }
  }
  return out;
}

std::filesystem::path temp_log(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove(p);
  return p;
}

}  // namespace

TEST_SUITE("serve") {

TEST_CASE("rank filters ineligible templates and matches library scores") {
  Fixture fx;
  Service svc(fx.snapshot(), {});
  auto active = request("s1", "active");
  active.k = 10;
  const auto resp = svc.rank(active);
  CHECK(resp.filtered_count == 1);
  CHECK(resp.suggestions.size() == 5);
  CHECK_FALSE(resp.no_eligible_response);
  CHECK(resp.snapshot_version == 1);
  std::vector<int> ids;
  for (const auto& s : resp.suggestions) {
    CHECK(s.template_id != 2);
    CHECK_FALSE(s.explored);
    ids.push_back(s.template_id);
  }
  for (std::size_t i = 1; i < resp.suggestions.size(); ++i) {
    CHECK(resp.suggestions[i - 1].score >= resp.suggestions[i].score);
  }
  const auto lib = library_scores(fx, active, ids);
  for (std::size_t i = 0; i < ids.size(); ++i) CHECK(std::abs(resp.suggestions[i].score - lib[i]) < 1e-6);

  const auto again = svc.rank(active);
  CHECK(rank_response_to_json(again) == rank_response_to_json(resp));

  auto blocked = request("s2", "blocked");
  blocked.k = 10;
  CHECK(svc.rank(blocked).filtered_count == 0);
  auto top2 = request("s3", "active");
  top2.k = 2;
  CHECK(svc.rank(top2).suggestions.size() == 2);
}

TEST_CASE("no eligible response is signalled only for an empty eligible set") {
  Fixture fx;
  for (auto& t : fx.pool.templates) t.constraints = {{"card_status", {"blocked"}}};
  Service svc(fx.snapshot(), {});
  const auto none = svc.rank(request("s", "active"));
  CHECK(none.no_eligible_response);
  CHECK(none.suggestions.empty());
  CHECK(none.filtered_count == fx.pool.templates.size());
  CHECK_FALSE(svc.rank(request("s", "blocked")).no_eligible_response);
}

TEST_CASE("malformed rank requests are rejected") {
  Fixture fx;
  Service svc(fx.snapshot(), {});
  auto r = request("", "active");
  CHECK_THROWS_AS(svc.rank(r), RequestError);
  r = request("s", "active");
  r.k = 0;
  CHECK_THROWS_AS(svc.rank(r), RequestError);
  r = request("s", "active");
  r.turns.clear();
  CHECK_THROWS_AS(svc.rank(r), RequestError);
  r = request("s", "active");
  r.explore = true;
  r.temperature = 0.0;
  CHECK_THROWS_AS(svc.rank(r), RequestError);
  CHECK_THROWS_AS(rank_request_from_json("{\"session_id\":3}"), RequestError);
  CHECK_THROWS_AS(rank_request_from_json("not json"), RequestError);
}

TEST_CASE("exploration puts one sampled suggestion first") {
  Fixture fx;
  Service svc(fx.snapshot(), {});
  auto r = request("s", "active");
  r.explore = true;
  r.temperature = 5.0;
  std::set<int> firsts;
  for (int i = 0; i < 200; ++i) {
    const auto resp = svc.rank(r);
    REQUIRE(resp.suggestions.size() == 4);
    CHECK(resp.suggestions[0].explored);
    CHECK_FALSE(resp.suggestions[1].explored);
    std::set<int> ids;
    for (const auto& s : resp.suggestions) ids.insert(s.template_id);
    CHECK(ids.size() == 4);
    firsts.insert(resp.suggestions[0].template_id);
  }
  CHECK(firsts.size() >= 4);
}

TEST_CASE("feedback is idempotent, validated and carries the ranked context") {
  Fixture fx;
  const auto log = temp_log("tod_serve_feedback.jsonl");
  ServiceConfig cfg;
  cfg.feedback_log = log;
  Service svc(fx.snapshot(), cfg);
  auto r = request("sess", "active");
  const auto resp = svc.rank(r);

  train::FeedbackEvent e;
  e.session_id = "sess";
  e.turn_index = 1;
  for (const auto& s : resp.suggestions) e.shown_template_ids.push_back(s.template_id);
  e.outcome = train::Outcome::kAccepted;
  e.chosen_template_id = resp.suggestions[1].template_id;
  CHECK(svc.feedback(e).recorded);
  CHECK_FALSE(svc.feedback(e).recorded);

  const auto events = train::load_feedback_log(log);
  REQUIRE(events.size() == 1);
  CHECK(events[0].history == r.turns);
  CHECK(events[0].features == r.features);
  CHECK(events[0].timestamp > 0);

  auto searched = e;
  searched.turn_index = 3;
  searched.outcome = train::Outcome::kSearched;
  CHECK_THROWS_AS(svc.feedback(searched), RequestError);
  auto unknown = e;
  unknown.chosen_template_id = 999;
  unknown.shown_template_ids.push_back(999);
  unknown.turn_index = 5;
  CHECK_THROWS_AS(svc.feedback(unknown), RequestError);
  auto never = e;
  never.turn_index = 7;
  CHECK_THROWS_AS(svc.feedback(never), RequestError);
  auto stranger = e;
  stranger.session_id = "other";
  CHECK_THROWS_AS(svc.feedback(stranger), RequestError);

  Service restarted(fx.snapshot(), cfg);
  CHECK_FALSE(restarted.feedback(e).recorded);
  CHECK(train::load_feedback_log(log).size() == 1);

  const auto h = svc.history("sess");
  REQUIRE(h.has_value());
  CHECK(h->events.size() == 1);
  CHECK_FALSE(svc.history("nobody").has_value());
  std::filesystem::remove(log);
}

TEST_CASE("template search ranks by token overlap") {
  const auto pool = small_pool();
  const auto hits = search_templates(pool, "refund card", 10);
  REQUIRE(hits.size() == 4);
  CHECK(hits[0].template_id == 1);
  CHECK(hits[0].overlap == 2);
  for (std::size_t i = 1; i < hits.size(); ++i) CHECK(hits[i].overlap == 1);
  CHECK(search_templates(pool, "", 10).empty());
  CHECK(search_templates(pool, "   ", 10).empty());
  CHECK(search_templates(pool, "REFUND", 1).size() == 1);

  const auto exact = search_templates(pool, "your card is blocked", 10);
  REQUIRE_FALSE(exact.empty());
  CHECK(exact[0].template_id == 2);

  // Two templates share every query token; the exact one comes first.
  registry::Pool tie = pool;
  tie.templates[0].text = "card refund";
  tie.templates[2].text = "Refund card";
  const auto t = search_templates(tie, "refund card", 10);
  CHECK(t[0].template_id == 3);
}

TEST_CASE("snapshot swap requires a newer version") {
  Fixture fx;
  Service svc(fx.snapshot(1), {});
  svc.swap(fx.snapshot(2));
  CHECK(svc.rank(request("s", "active")).snapshot_version == 2);
  CHECK_THROWS(svc.swap(fx.snapshot(2)));
}

TEST_CASE("http round trip") {
  Fixture fx;
  const auto log = temp_log("tod_http_feedback.jsonl");
  ServiceConfig cfg;
  cfg.feedback_log = log;
  Service svc(fx.snapshot(), cfg);
  HttpServer server(svc);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread th([&] { server.listen(); });
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(10, 0);

  auto health = cli.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body)["pool_size"] == 6);

  auto r = request("web", "active");
  auto ranked = cli.Post("/v1/rank", rank_request_to_json(r), "application/json");
  REQUIRE(ranked);
  CHECK(ranked->status == 200);
  const auto resp = rank_response_from_json(ranked->body);
  CHECK(rank_response_to_json(resp) == rank_response_to_json(svc.rank(r)));
  std::vector<int> ids;
  for (const auto& s : resp.suggestions) ids.push_back(s.template_id);
  const auto lib = library_scores(fx, r, ids);
  for (std::size_t i = 0; i < ids.size(); ++i) CHECK(std::abs(resp.suggestions[i].score - lib[i]) < 1e-6);

  json fb{{"session_id", "web"}, {"turn_index", 1}, {"shown_template_ids", ids}, {"outcome", "accepted"},
          {"chosen_template_id", ids[0]}};
  auto first = cli.Post("/v1/feedback", fb.dump(), "application/json");
  REQUIRE(first);
  CHECK(first->status == 200);
  CHECK(json::parse(first->body)["status"] == "recorded");
  auto second = cli.Post("/v1/feedback", fb.dump(), "application/json");
  CHECK(json::parse(second->body)["status"] == "duplicate");
  fb["outcome"] = "searched";
  fb["turn_index"] = 3;
  auto bad = cli.Post("/v1/feedback", fb.dump(), "application/json");
  CHECK(bad->status == 400);
  CHECK(json::parse(bad->body).contains("error"));
  CHECK(cli.Post("/v1/rank", "{", "application/json")->status == 400);

  auto search = cli.Get("/v1/templates?q=refund%20card&limit=2");
  REQUIRE(search);
  const auto hits = json::parse(search->body)["templates"];
  CHECK(hits.size() == 2);
  CHECK(hits[0]["template_id"] == 1);
  CHECK(cli.Get("/v1/templates?q=card&limit=0")->status == 400);

  auto hist = cli.Get("/v1/session/web/history");
  REQUIRE(hist);
  CHECK(json::parse(hist->body)["events"].size() == 1);
  CHECK(cli.Get("/v1/session/missing/history")->status == 404);

  server.stop();
  th.join();
  std::filesystem::remove(log);
}

TEST_CASE("line fit and percentile by hand") {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> y{3, 5, 7, 9};
  const auto f = fit_line(x, y);
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.r2 == doctest::Approx(1.0));
  const std::vector<double> noisy{1, 3, 2, 4};
  // slope 0.8, residuals -0.3, 0.9, -0.9, 0.3: SSE 1.8, SST 5
  CHECK(fit_line(x, noisy).r2 == doctest::Approx(1 - 1.8 / 5));
  CHECK(percentile({5, 1, 3}, 0.5) == 3);
  CHECK(percentile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(percentile({1, 2, 3, 4}, 0.95) == doctest::Approx(3.85));
}

}
