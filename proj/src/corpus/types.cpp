#include "tod/corpus/types.hpp"

#include <algorithm>

namespace tod::corpus {

std::string_view to_string(Speaker s) { return s == Speaker::kAgent ? "agent" : "user"; }

Speaker parse_speaker(std::string_view s) {
  if (s == "agent") return Speaker::kAgent;
  if (s == "user") return Speaker::kUser;
  throw CorpusError("unknown speaker '" + std::string(s) + "'");
}

bool is_feature_identifier(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  });
}

FeatureMap::FeatureMap(std::initializer_list<std::pair<const std::string, std::string>> entries) {
  for (const auto& [k, v] : entries) set(k, v);
}

void FeatureMap::set(const std::string& key, const std::string& value) {
  if (!is_feature_identifier(key)) throw CorpusError("invalid feature key '" + key + "'");
  if (!is_feature_identifier(value)) {
    throw CorpusError("invalid value '" + value + "' for feature '" + key + "'");
  }
  entries_[key] = value;
}

std::optional<std::string_view> FeatureMap::get(std::string_view key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return std::string_view(it->second);
}

std::size_t Dialogue::agent_turn_count() const {
  return std::size_t(std::count_if(turns.begin(), turns.end(),
                                   [](const Turn& t) { return t.speaker == Speaker::kAgent; }));
}

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(const std::vector<std::string>& tokens) {
  tokens_ = {"[PAD]", "[UNK]", "[AGENTSTART]", "[USERSTART]", "[RESPSTART]"};
  tokens_.insert(tokens_.end(), tokens.begin(), tokens.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], int(i)).second) {
      throw CorpusError("vocab: duplicate token '" + tokens_[i] + "'");
    }
  }
}

int Vocab::id(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return ids_.find(token) != ids_.end(); }

const std::string& Vocab::token(int id) const {
  if (id < 0 || std::size_t(id) >= tokens_.size()) throw CorpusError("vocab: id out of range");
  return tokens_[std::size_t(id)];
}

}  // namespace tod::corpus
