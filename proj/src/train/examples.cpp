#include "tod/train/examples.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace tod::train {

using nlohmann::ordered_json;

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kSst: return "sst";
    case Provenance::kSftAccepted: return "sft_accepted";
    case Provenance::kSftSearched: return "sft_searched";
  }
  return "sst";
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::kAccepted: return "accepted";
    case Outcome::kSearched: return "searched";
    case Outcome::kFailure: return "failure";
  }
  return "failure";
}

Outcome parse_outcome(std::string_view s) {
  if (s == "accepted") return Outcome::kAccepted;
  if (s == "searched") return Outcome::kSearched;
  if (s == "failure") return Outcome::kFailure;
  throw TrainError("unknown outcome '" + std::string(s) + "'");
}

namespace {

// Places the positive at a random slot among the negatives.
template <typename Cand>
std::size_t place_positive(std::vector<Cand>& negatives, Cand positive, std::mt19937_64& rng) {
  const std::size_t slot = std::uniform_int_distribution<std::size_t>(0, negatives.size())(rng);
  negatives.insert(negatives.begin() + std::ptrdiff_t(slot), std::move(positive));
  return slot;
}

}  // namespace

std::vector<TrainingExample> make_sst_examples(std::span<const corpus::Dialogue> corpus, const corpus::Vocab& vocab,
                                               std::size_t n_neg, std::uint64_t seed,
                                               const corpus::SequenceLimits& limits) {
  if (n_neg == 0) throw TrainError("make_sst_examples: at least one negative is required");
  struct AgentTurn {
    std::size_t dialogue;
    const std::string* text;
  };
  std::vector<AgentTurn> turns;
  std::unordered_set<std::string_view> distinct;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    for (const auto& t : corpus[d].turns) {
      if (t.speaker != corpus::Speaker::kAgent) continue;
      turns.push_back({d, &t.text});
      distinct.insert(t.text);
    }
  }
  if (distinct.size() < n_neg + 1) {
    throw TrainError("make_sst_examples: corpus has " + std::to_string(distinct.size()) +
                     " distinct agent turns, need " + std::to_string(n_neg + 1));
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, turns.size() - 1);
  std::unordered_map<std::string_view, corpus::TokenIds> encoded;
  auto encode = [&](const std::string& text) -> const corpus::TokenIds& {
    auto it = encoded.find(text);
    if (it == encoded.end()) it = encoded.emplace(text, corpus::encode_text(text, vocab)).first;
    return it->second;
  };

  std::vector<TrainingExample> out;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    for (auto& ctx : corpus::explode_dialogue(corpus[d], vocab, limits)) {
      std::vector<const std::string*> negatives;
      std::unordered_set<std::string_view> used{ctx.gold_response_text};
      std::size_t attempts = 0;
      while (negatives.size() < n_neg) {
        if (++attempts > 1000 * (n_neg + 1)) {
          throw TrainError("make_sst_examples: cannot find enough distinct negatives for dialogue " + corpus[d].id);
        }
        const AgentTurn& cand = turns[pick(rng)];
        if (cand.dialogue == d || !used.insert(*cand.text).second) continue;
        negatives.push_back(cand.text);
      }
      TrainingExample ex;
      ex.history = std::move(ctx.history_tokens);
      ex.features = std::move(ctx.feature_tokens);
      ex.provenance = Provenance::kSst;
      for (const auto* text : negatives) ex.candidates.push_back(encode(*text));
      ex.positive = place_positive(ex.candidates, corpus::encode_text(ctx.gold_response_text, vocab), rng);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::string feedback_violation(const FeedbackEvent& e) {
  if (e.session_id.empty()) return "session_id is empty";
  if (e.turn_index < 0) return "turn_index is negative";
  const bool shown = e.chosen_template_id &&
                     std::find(e.shown_template_ids.begin(), e.shown_template_ids.end(), *e.chosen_template_id) !=
                         e.shown_template_ids.end();
  switch (e.outcome) {
    case Outcome::kAccepted:
      if (!e.chosen_template_id) return "accepted outcome requires chosen_template_id";
      if (!shown) return "accepted template is not among the shown suggestions";
      break;
    case Outcome::kSearched:
      if (!e.chosen_template_id) return "searched outcome requires chosen_template_id";
      if (shown) return "searched template was already among the shown suggestions";
      break;
    case Outcome::kFailure:
      if (e.chosen_template_id) return "failure outcome must not carry chosen_template_id";
      break;
  }
  return {};
}

std::string feedback_to_json(const FeedbackEvent& e) {
  ordered_json j;
  j["session_id"] = e.session_id;
  j["turn_index"] = e.turn_index;
  j["shown_template_ids"] = e.shown_template_ids;
  j["outcome"] = std::string(to_string(e.outcome));
  if (e.chosen_template_id) j["chosen_template_id"] = *e.chosen_template_id;
  j["timestamp"] = e.timestamp;
  ordered_json turns = ordered_json::array();
  for (const auto& t : e.history) turns.push_back({{"speaker", std::string(corpus::to_string(t.speaker))}, {"text", t.text}});
  j["history"] = std::move(turns);
  ordered_json features = ordered_json::object();
  for (const auto& [k, v] : e.features.entries()) features[k] = v;
  j["features"] = std::move(features);
  return j.dump();
}

FeedbackEvent feedback_from_json(const std::string& line) {
  FeedbackEvent e;
  try {
    const ordered_json j = ordered_json::parse(line);
    e.session_id = j.at("session_id").get<std::string>();
    e.turn_index = j.at("turn_index").get<int>();
    e.shown_template_ids = j.at("shown_template_ids").get<std::vector<int>>();
    e.outcome = parse_outcome(j.at("outcome").get<std::string>());
    if (j.contains("chosen_template_id") && !j["chosen_template_id"].is_null()) {
      e.chosen_template_id = j["chosen_template_id"].get<int>();
    }
    e.timestamp = j.value("timestamp", std::int64_t{0});
    for (const auto& t : j.value("history", ordered_json::array())) {
      e.history.push_back({corpus::parse_speaker(t.at("speaker").get<std::string>()), t.at("text").get<std::string>()});
    }
    const ordered_json features = j.value("features", ordered_json::object());
    for (const auto& [k, v] : features.items()) e.features.set(k, v.get<std::string>());
  } catch (const nlohmann::json::exception& ex) {
    throw TrainError(std::string("bad feedback record: ") + ex.what());
  } catch (const corpus::CorpusError& ex) {
    throw TrainError(std::string("bad feedback record: ") + ex.what());
  }
  if (auto why = feedback_violation(e); !why.empty()) throw TrainError("bad feedback record: " + why);
  return e;
}

std::vector<FeedbackEvent> load_feedback_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TrainError("cannot open feedback log " + path.string());
  std::vector<FeedbackEvent> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      out.push_back(feedback_from_json(line));
    } catch (const TrainError& e) {
      throw TrainError("feedback log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void append_feedback(const FeedbackEvent& e, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw TrainError("cannot append to feedback log " + path.string());
  out << feedback_to_json(e) << '\n';
}

SftBuild make_sft_examples(std::span<const FeedbackEvent> events, const registry::Pool& pool,
                           const corpus::Vocab& vocab, std::size_t n_neg, std::uint64_t seed,
                           const corpus::SequenceLimits& limits) {
  if (n_neg == 0) throw TrainError("make_sft_examples: at least one negative is required");
  std::unordered_map<int, std::size_t> row_of;
  for (std::size_t i = 0; i < pool.templates.size(); ++i) row_of[pool.templates[i].id] = i;
  std::vector<corpus::TokenIds> encoded;
  encoded.reserve(pool.templates.size());
  for (const auto& t : pool.templates) encoded.push_back(corpus::encode_text(t.text, vocab));

  SftBuild out;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.templates.empty() ? 0 : pool.templates.size() - 1);
  for (const auto& e : events) {
    if (e.outcome == Outcome::kFailure) {
      ++out.failures;
      continue;
    }
    const int chosen = *e.chosen_template_id;
    if (!row_of.count(chosen)) {
      throw TrainError("feedback for session " + e.session_id + " chose template " + std::to_string(chosen) +
                       ", which is not in the pool");
    }
    if (pool.templates.size() < n_neg + 1) throw TrainError("make_sft_examples: pool smaller than candidate count");

    std::vector<int> negatives;
    std::set<int> used{chosen};
    TrainingExample ex;
    if (e.outcome == Outcome::kSearched) {
      ex.provenance = Provenance::kSftSearched;
      for (int id : e.shown_template_ids) {
        if (negatives.size() == n_neg) break;
        if (!row_of.count(id) || !used.insert(id).second) continue;
        negatives.push_back(id);
        ex.hard_negative_ids.push_back(id);
      }
      ++out.searched;
    } else {
      ex.provenance = Provenance::kSftAccepted;
      ++out.accepted;
    }
    while (negatives.size() < n_neg) {
      const int id = pool.templates[pick(rng)].id;
      if (used.insert(id).second) negatives.push_back(id);
    }
    ex.positive = place_positive(negatives, chosen, rng);
    ex.candidate_ids = negatives;
    for (int id : ex.candidate_ids) ex.candidates.push_back(encoded[row_of[id]]);
    auto history = corpus::flatten_history(e.history, vocab);
    if (history.size() > limits.history) history.erase(history.begin(), history.end() - std::ptrdiff_t(limits.history));
    ex.history = std::move(history);
    ex.features = corpus::serialize_features(e.features, vocab);
    if (ex.features.size() > limits.features) ex.features.resize(limits.features);
    out.examples.push_back(std::move(ex));
  }
  return out;
}

std::vector<TrainingExample> mix_replay(std::span<const TrainingExample> sft, std::span<const TrainingExample> sst,
                                        std::uint64_t seed) {
  if (sst.size() < sft.size()) {
    throw TrainError("mix_replay: need " + std::to_string(sft.size()) + " self-supervised examples, have " +
                     std::to_string(sst.size()));
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(sst.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<TrainingExample> out(sft.begin(), sft.end());
  for (std::size_t i = 0; i < sft.size(); ++i) out.push_back(sst[order[i]]);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::string examples_to_jsonl(std::span<const TrainingExample> examples) {
  std::string out;
  for (const auto& ex : examples) {
    ordered_json j;
    j["history"] = ex.history;
    j["features"] = ex.features;
    j["candidates"] = ex.candidates;
    j["positive"] = ex.positive;
    j["provenance"] = std::string(to_string(ex.provenance));
    if (!ex.candidate_ids.empty()) j["candidate_ids"] = ex.candidate_ids;
    if (!ex.hard_negative_ids.empty()) j["hard_negative_ids"] = ex.hard_negative_ids;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace tod::train
