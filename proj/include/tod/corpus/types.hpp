#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tod::corpus {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Speaker { kAgent, kUser };

std::string_view to_string(Speaker s);
Speaker parse_speaker(std::string_view s);

struct Turn {
  Speaker speaker = Speaker::kAgent;
  std::string text;

  bool operator==(const Turn&) const = default;
};

// True when s is non-empty and matches [a-z0-9_]+.
bool is_feature_identifier(std::string_view s);

// Categorical profile features, iterated in ascending key order.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::initializer_list<std::pair<const std::string, std::string>> entries);

  // Throws CorpusError when key or value violates the identifier grammar.
  void set(const std::string& key, const std::string& value);
  std::optional<std::string_view> get(std::string_view key) const;
  bool contains(std::string_view key) const { return get(key).has_value(); }

  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  bool operator==(const FeatureMap&) const = default;

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

inline constexpr int kNoTemplate = -1;

struct Dialogue {
  std::string id;
  std::vector<Turn> turns;
  FeatureMap profile;
  std::string intent;
  // Hidden evaluation annotation: latent gold template id per turn
  // (kNoTemplate for user turns). Empty when the corpus carries no labels.
  std::vector<int> gold_templates;

  std::size_t agent_turn_count() const;
  bool operator==(const Dialogue&) const = default;
};

using TokenIds = std::vector<int>;

struct RankingContext {
  TokenIds history_tokens;
  TokenIds feature_tokens;
  std::string gold_response_text;
  std::string dialogue_id;
  int turn_index = 0;
  int gold_template = kNoTemplate;
};

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kAgentStart = 2;
  static constexpr int kUserStart = 3;
  static constexpr int kRespStart = 4;
  static constexpr int kReserved = 5;

  Vocab();
  // Reserved entries are added first; duplicates in `tokens` are rejected.
  explicit Vocab(const std::vector<std::string>& tokens);

  int id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int, Hash, std::equal_to<>> ids_;
};

}  // namespace tod::corpus
