#pragma once

#include "tod/corpus/text.hpp"
#include "tod/model/inference.hpp"
#include "tod/registry/registry.hpp"
#include "tod/train/examples.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace tod::serve {

// A malformed or contradictory request; maps to HTTP 400.
class RequestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RankRequest {
  std::string session_id;
  std::vector<corpus::Turn> turns;
  corpus::FeatureMap features;
  int k = 4;
  bool explore = false;
  std::optional<double> temperature;
};

struct SuggestionOut {
  int template_id = 0;
  std::string text;
  double score = 0.0;
  bool explored = false;
};

struct RankResponse {
  std::vector<SuggestionOut> suggestions;
  std::size_t filtered_count = 0;  // pool templates excluded by constraints
  std::uint64_t snapshot_version = 0;
  bool no_eligible_response = false;
};

// Everything one ranking call reads. Immutable once published.
struct Snapshot {
  std::shared_ptr<model::PolyRanker<float>> model;
  corpus::Vocab vocab;
  model::PolyRanker<float>::FusionWeights fusion;
  model::PoolCache cache;  // rows in pool order
  registry::Pool pool;
  std::uint32_t fingerprint = 0;
  std::uint64_t version = 0;
};

// Encodes the pool with the model; cache_path, when set, is reused if its
// fingerprint matches.
std::shared_ptr<const Snapshot> make_snapshot(std::shared_ptr<model::PolyRanker<float>> model,
                                              const corpus::Vocab& vocab, registry::Pool pool,
                                              const std::filesystem::path& cache_path = {});

struct ServiceConfig {
  double explore_temperature = 1.0;
  std::optional<std::filesystem::path> feedback_log;
  std::uint64_t seed = 0x5eed;
  corpus::SequenceLimits limits;
};

struct FeedbackAck {
  bool recorded = false;  // false for an idempotent repeat
};

struct SessionHistory {
  std::string session_id;
  std::vector<corpus::Turn> turns;  // from the latest rank request
  corpus::FeatureMap features;
  std::vector<train::FeedbackEvent> events;
};

struct TemplateHit {
  int template_id = 0;
  std::string text;
  std::size_t overlap = 0;
};

// Case-insensitive overlap of distinct word tokens; ties keep the exact
// text match first, then pool order.
std::vector<TemplateHit> search_templates(const registry::Pool& pool, const std::string& query, std::size_t limit);

class Service {
 public:
  Service(std::shared_ptr<const Snapshot> snapshot, ServiceConfig config);

  // Throws RequestError on malformed input.
  RankResponse rank(const RankRequest& request);

  // Validates the event, attaches the context ranked for that turn and
  // appends it to the log once per (session_id, turn_index). Throws
  // RequestError with the reason on invalid events.
  FeedbackAck feedback(train::FeedbackEvent event);

  std::vector<TemplateHit> templates(const std::string& query, std::size_t limit) const;
  std::optional<SessionHistory> history(const std::string& session_id) const;

  // Publishes a new snapshot; later requests see it, running ones finish on
  // the old one. Its version must exceed the current one.
  void swap(std::shared_ptr<const Snapshot> snapshot);
  std::shared_ptr<const Snapshot> snapshot() const;

  const ServiceConfig& config() const { return config_; }

 private:
  struct Session {
    std::vector<corpus::Turn> turns;
    corpus::FeatureMap features;
    // Context each agent turn was ranked for, keyed by its turn index.
    std::map<int, std::pair<std::vector<corpus::Turn>, corpus::FeatureMap>> ranked;
    std::vector<train::FeedbackEvent> events;
  };

  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const Snapshot> snapshot_;
  ServiceConfig config_;
  mutable std::mutex mutex_;  // sessions, rng, log
  std::map<std::string, Session> sessions_;
  std::set<std::pair<std::string, int>> logged_;
  std::mt19937_64 rng_;
};

// JSON (de)serialization with the public field names.
RankRequest rank_request_from_json(const std::string& body);
std::string rank_request_to_json(const RankRequest& request);
std::string rank_response_to_json(const RankResponse& response);
RankResponse rank_response_from_json(const std::string& body);
// Accepts the FeedbackEvent fields; history and features are optional.
train::FeedbackEvent feedback_request_from_json(const std::string& body);
std::string templates_to_json(const std::vector<TemplateHit>& hits);
std::string history_to_json(const SessionHistory& history);

}  // namespace tod::serve
