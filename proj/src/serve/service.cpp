#include "tod/serve/service.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_set>

namespace tod::serve {

using nlohmann::ordered_json;

std::shared_ptr<const Snapshot> make_snapshot(std::shared_ptr<model::PolyRanker<float>> model,
                                              const corpus::Vocab& vocab, registry::Pool pool,
                                              const std::filesystem::path& cache_path) {
  if (!model) throw std::invalid_argument("make_snapshot: no model");
  registry::validate_pool(pool);
  auto snap = std::make_shared<Snapshot>();
  snap->fingerprint = model->fingerprint();
  std::vector<int> ids;
  std::vector<corpus::TokenIds> tokens;
  for (const auto& t : pool.templates) {
    ids.push_back(t.id);
    tokens.push_back(corpus::encode_text(t.text, vocab));
  }
  snap->cache = cache_path.empty() ? model::encode_pool(*model, ids, tokens)
                                   : model::load_or_encode_pool(*model, snap->fingerprint, ids, tokens, cache_path);
  snap->cache.fingerprint = snap->fingerprint;
  snap->fusion = model->fusion_weights();
  snap->vocab = vocab;
  snap->version = pool.version;
  snap->pool = std::move(pool);
  snap->model = std::move(model);
  return snap;
}

namespace {

bool is_word(const std::string& token) {
  return std::any_of(token.begin(), token.end(), [](unsigned char c) { return std::isalnum(c) || c >= 0x80; });
}

std::vector<std::string> word_set(const std::string& text) {
  std::vector<std::string> out;
  for (auto& t : corpus::tokenize(text)) {
    if (is_word(t)) out.push_back(std::move(t));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

std::vector<TemplateHit> search_templates(const registry::Pool& pool, const std::string& query, std::size_t limit) {
  const auto q = word_set(query);
  if (q.empty() || limit == 0) return {};
  const auto q_tokens = corpus::tokenize(query);
  struct Scored {
    std::size_t row;
    std::size_t overlap;
    bool exact;
  };
  std::vector<Scored> scored;
  for (std::size_t i = 0; i < pool.templates.size(); ++i) {
    const auto words = word_set(pool.templates[i].text);
    std::size_t overlap = 0;
    for (const auto& w : q) {
      if (std::binary_search(words.begin(), words.end(), w)) ++overlap;
    }
    if (overlap == 0) continue;
    scored.push_back({i, overlap, corpus::tokenize(pool.templates[i].text) == q_tokens});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.overlap != b.overlap) return a.overlap > b.overlap;
    return a.exact && !b.exact;
  });
  if (scored.size() > limit) scored.resize(limit);
  std::vector<TemplateHit> out;
  for (const auto& s : scored) out.push_back({pool.templates[s.row].id, pool.templates[s.row].text, s.overlap});
  return out;
}

Service::Service(std::shared_ptr<const Snapshot> snapshot, ServiceConfig config)
    : snapshot_(std::move(snapshot)), config_(std::move(config)), rng_(config_.seed) {
  if (!snapshot_) throw std::invalid_argument("Service: no snapshot");
  if (!(config_.explore_temperature > 0.0)) throw std::invalid_argument("Service: explore temperature must be positive");
  if (config_.feedback_log && std::filesystem::exists(*config_.feedback_log)) {
    for (const auto& e : train::load_feedback_log(*config_.feedback_log)) {
      logged_.insert({e.session_id, e.turn_index});
    }
    spdlog::info("feedback log {} holds {} events", config_.feedback_log->string(), logged_.size());
  }
}

std::shared_ptr<const Snapshot> Service::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

void Service::swap(std::shared_ptr<const Snapshot> snapshot) {
  if (!snapshot) throw std::invalid_argument("Service::swap: no snapshot");
  std::lock_guard lock(snapshot_mutex_);
  if (snapshot->version <= snapshot_->version) {
    throw std::invalid_argument("Service::swap: version " + std::to_string(snapshot->version) +
                                " does not exceed current " + std::to_string(snapshot_->version));
  }
  snapshot_ = std::move(snapshot);
}

RankResponse Service::rank(const RankRequest& request) {
  if (request.session_id.empty()) throw RequestError("session_id is required");
  if (request.turns.empty()) throw RequestError("turns must not be empty");
  if (request.k < 1) throw RequestError("k must be at least 1");
  if (request.temperature && !(std::isfinite(*request.temperature) && *request.temperature > 0.0)) {
    throw RequestError("temperature must be a positive number");
  }
  const auto snap = snapshot();

  RankResponse response;
  response.snapshot_version = snap->version;
  const auto rows = registry::eligible_indices(snap->pool, request.features);
  response.filtered_count = snap->pool.templates.size() - rows.size();
  response.no_eligible_response = rows.empty();

  if (!rows.empty()) {
    auto history = corpus::flatten_history(request.turns, snap->vocab);
    if (history.size() > config_.limits.history) {
      history.erase(history.begin(), history.end() - std::ptrdiff_t(config_.limits.history));
    }
    auto features = corpus::serialize_features(request.features, snap->vocab);
    if (features.size() > config_.limits.features) features.resize(config_.limits.features);
    const auto ctx = snap->model->context(history, features);
    const std::size_t k = std::min(std::size_t(request.k), rows.size());
    const auto ranked = model::rank_rows(snap->fusion, ctx, snap->cache, rows, request.explore ? rows.size() : k);
    std::vector<model::Suggestion> chosen;
    {
      std::lock_guard lock(mutex_);
      chosen = model::select_suggestions(ranked, k, request.explore,
                                         request.temperature.value_or(config_.explore_temperature), rng_);
    }
    for (const auto& s : chosen) {
      response.suggestions.push_back(
          {s.ranked.template_id, snap->pool.templates[s.ranked.row].text, s.ranked.score, s.explored});
    }
  }

  std::lock_guard lock(mutex_);
  auto& session = sessions_[request.session_id];
  session.turns = request.turns;
  session.features = request.features;
  session.ranked[int(request.turns.size())] = {request.turns, request.features};
  return response;
}

FeedbackAck Service::feedback(train::FeedbackEvent event) {
  if (auto why = train::feedback_violation(event); !why.empty()) throw RequestError(why);
  const auto snap = snapshot();
  if (event.chosen_template_id && snap->pool.find(*event.chosen_template_id) == nullptr) {
    throw RequestError("chosen_template_id " + std::to_string(*event.chosen_template_id) + " is not in the pool");
  }
  if (event.timestamp == 0) {
    event.timestamp = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::system_clock::now().time_since_epoch())
                          .count();
  }

  std::lock_guard lock(mutex_);
  const auto key = std::make_pair(event.session_id, event.turn_index);
  if (logged_.count(key)) return {false};
  if (event.history.empty() && event.features.empty()) {
    auto s = sessions_.find(event.session_id);
    if (s == sessions_.end()) throw RequestError("unknown session " + event.session_id);
    auto r = s->second.ranked.find(event.turn_index);
    if (r == s->second.ranked.end()) {
      throw RequestError("turn " + std::to_string(event.turn_index) + " of session " + event.session_id +
                         " was never ranked");
    }
    event.history = r->second.first;
    event.features = r->second.second;
  }
  if (config_.feedback_log) train::append_feedback(event, *config_.feedback_log);
  logged_.insert(key);
  sessions_[event.session_id].events.push_back(std::move(event));
  return {true};
}

std::vector<TemplateHit> Service::templates(const std::string& query, std::size_t limit) const {
  return search_templates(snapshot()->pool, query, limit);
}

std::optional<SessionHistory> Service::history(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return std::nullopt;
  return SessionHistory{session_id, it->second.turns, it->second.features, it->second.events};
}

namespace {

ordered_json turns_json(const std::vector<corpus::Turn>& turns) {
  ordered_json out = ordered_json::array();
  for (const auto& t : turns) out.push_back({{"speaker", std::string(corpus::to_string(t.speaker))}, {"text", t.text}});
  return out;
}

ordered_json features_json(const corpus::FeatureMap& features) {
  ordered_json out = ordered_json::object();
  for (const auto& [k, v] : features.entries()) out[k] = v;
  return out;
}

template <typename Fn>
auto guarded(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    throw RequestError(e.what());
  } catch (const corpus::CorpusError& e) {
    throw RequestError(e.what());
  } catch (const train::TrainError& e) {
    throw RequestError(e.what());
  }
}

}  // namespace

RankRequest rank_request_from_json(const std::string& body) {
  return guarded([&] {
    const auto j = ordered_json::parse(body);
    if (!j.is_object()) throw RequestError("request body must be a JSON object");
    RankRequest r;
    r.session_id = j.at("session_id").get<std::string>();
    for (const auto& t : j.at("turns")) {
      r.turns.push_back({corpus::parse_speaker(t.at("speaker").get<std::string>()), t.at("text").get<std::string>()});
    }
    const ordered_json features_json = j.value("features", ordered_json::object());
    for (const auto& [k, v] : features_json.items()) r.features.set(k, v.get<std::string>());
    r.k = j.value("k", 4);
    r.explore = j.value("explore", false);
    if (j.contains("temperature") && !j["temperature"].is_null()) r.temperature = j["temperature"].get<double>();
    return r;
  });
}

std::string rank_request_to_json(const RankRequest& r) {
  ordered_json j;
  j["session_id"] = r.session_id;
  j["turns"] = turns_json(r.turns);
  j["features"] = features_json(r.features);
  j["k"] = r.k;
  j["explore"] = r.explore;
  if (r.temperature) j["temperature"] = *r.temperature;
  return j.dump();
}

std::string rank_response_to_json(const RankResponse& r) {
  ordered_json j;
  ordered_json list = ordered_json::array();
  for (const auto& s : r.suggestions) {
    list.push_back({{"template_id", s.template_id}, {"text", s.text}, {"score", s.score}, {"explored", s.explored}});
  }
  j["suggestions"] = std::move(list);
  j["filtered_count"] = r.filtered_count;
  j["snapshot_version"] = r.snapshot_version;
  j["no_eligible_response"] = r.no_eligible_response;
  return j.dump();
}

RankResponse rank_response_from_json(const std::string& body) {
  return guarded([&] {
    const auto j = ordered_json::parse(body);
    RankResponse r;
    for (const auto& s : j.at("suggestions")) {
      r.suggestions.push_back({s.at("template_id").get<int>(), s.at("text").get<std::string>(),
                               s.at("score").get<double>(), s.at("explored").get<bool>()});
    }
    r.filtered_count = j.at("filtered_count").get<std::size_t>();
    r.snapshot_version = j.at("snapshot_version").get<std::uint64_t>();
    r.no_eligible_response = j.at("no_eligible_response").get<bool>();
    return r;
  });
}

train::FeedbackEvent feedback_request_from_json(const std::string& body) {
  return guarded([&] {
    auto j = ordered_json::parse(body);
    if (!j.is_object()) throw RequestError("request body must be a JSON object");
    // Structural parsing only; invariant checks happen in Service::feedback.
    train::FeedbackEvent e;
    e.session_id = j.at("session_id").get<std::string>();
    e.turn_index = j.at("turn_index").get<int>();
    e.shown_template_ids = j.at("shown_template_ids").get<std::vector<int>>();
    e.outcome = train::parse_outcome(j.at("outcome").get<std::string>());
    if (j.contains("chosen_template_id") && !j["chosen_template_id"].is_null()) {
      e.chosen_template_id = j["chosen_template_id"].get<int>();
    }
    e.timestamp = j.value("timestamp", std::int64_t{0});
    for (const auto& t : j.value("history", ordered_json::array())) {
      e.history.push_back({corpus::parse_speaker(t.at("speaker").get<std::string>()), t.at("text").get<std::string>()});
    }
    const ordered_json features_json = j.value("features", ordered_json::object());
    for (const auto& [k, v] : features_json.items()) e.features.set(k, v.get<std::string>());
    return e;
  });
}

std::string templates_to_json(const std::vector<TemplateHit>& hits) {
  ordered_json list = ordered_json::array();
  for (const auto& h : hits) list.push_back({{"template_id", h.template_id}, {"text", h.text}, {"overlap", h.overlap}});
  ordered_json j;
  j["templates"] = std::move(list);
  return j.dump();
}

std::string history_to_json(const SessionHistory& h) {
  ordered_json j;
  j["session_id"] = h.session_id;
  j["turns"] = turns_json(h.turns);
  j["features"] = features_json(h.features);
  ordered_json events = ordered_json::array();
  for (const auto& e : h.events) {
    auto ej = ordered_json::parse(train::feedback_to_json(e));
    ej.erase("history");
    ej.erase("features");
    events.push_back(std::move(ej));
  }
  j["events"] = std::move(events);
  return j.dump();
}

}  // namespace tod::serve
