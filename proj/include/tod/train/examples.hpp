#pragma once

#include "tod/corpus/text.hpp"
#include "tod/corpus/types.hpp"
#include "tod/registry/registry.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tod::train {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Provenance { kSst, kSftAccepted, kSftSearched };
std::string_view to_string(Provenance p);

struct TrainingExample {
  corpus::TokenIds history;
  corpus::TokenIds features;
  std::vector<corpus::TokenIds> candidates;
  std::size_t positive = 0;
  Provenance provenance = Provenance::kSst;
  // Pool ids per candidate for SFT examples; empty for SST.
  std::vector<int> candidate_ids;
  std::vector<int> hard_negative_ids;

  bool operator==(const TrainingExample&) const = default;
};

// Negatives are agent turns of other dialogues, never text-identical to the
// positive or to each other; the positive lands at a seeded random slot.
std::vector<TrainingExample> make_sst_examples(std::span<const corpus::Dialogue> corpus, const corpus::Vocab& vocab,
                                               std::size_t n_neg, std::uint64_t seed,
                                               const corpus::SequenceLimits& limits = {});

enum class Outcome { kAccepted, kSearched, kFailure };
std::string_view to_string(Outcome o);
Outcome parse_outcome(std::string_view s);

// One human-in-the-loop decision plus the context the suggestions were
// ranked for, so the log alone can rebuild training data.
struct FeedbackEvent {
  std::string session_id;
  int turn_index = 0;
  std::vector<int> shown_template_ids;
  Outcome outcome = Outcome::kFailure;
  std::optional<int> chosen_template_id;
  std::int64_t timestamp = 0;  // milliseconds since epoch
  std::vector<corpus::Turn> history;
  corpus::FeatureMap features;

  bool operator==(const FeedbackEvent&) const = default;
};

// Empty when the event is consistent, otherwise the reason it is not.
std::string feedback_violation(const FeedbackEvent& e);

std::string feedback_to_json(const FeedbackEvent& e);
FeedbackEvent feedback_from_json(const std::string& line);
std::vector<FeedbackEvent> load_feedback_log(const std::filesystem::path& path);
void append_feedback(const FeedbackEvent& e, const std::filesystem::path& path);

struct SftBuild {
  std::vector<TrainingExample> examples;
  std::size_t failures = 0;
  std::size_t accepted = 0;
  std::size_t searched = 0;
};

// Accepted events: chosen template against random pool negatives. Searched
// events: the shown suggestions become hard negatives, the rest random.
// Failure events are only counted. Throws TrainError when a chosen id is
// not in the pool.
SftBuild make_sft_examples(std::span<const FeedbackEvent> events, const registry::Pool& pool,
                           const corpus::Vocab& vocab, std::size_t n_neg, std::uint64_t seed,
                           const corpus::SequenceLimits& limits = {});

// Every SFT example once plus as many SST examples drawn without
// replacement, shuffled.
std::vector<TrainingExample> mix_replay(std::span<const TrainingExample> sft, std::span<const TrainingExample> sst,
                                        std::uint64_t seed);

// Canonical text form, one example per line.
std::string examples_to_jsonl(std::span<const TrainingExample> examples);

}  // namespace tod::train
