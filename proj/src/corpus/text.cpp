#include "tod/corpus/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

namespace tod::corpus {
namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_punct(unsigned char c) { return c < 128 && std::ispunct(c); }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c < 128 ? char(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

namespace {

// Punctuation-only pieces such as "..." are not sentences.
bool has_word(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || (c & 0x80); });
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '.' || text[i] == '!' || text[i] == '?') {
      while (i < text.size() && (text[i] == '.' || text[i] == '!' || text[i] == '?')) ++i;
      auto s = trim(text.substr(start, i - start));
      if (has_word(s)) out.emplace_back(s);
      start = i;
    } else {
      ++i;
    }
  }
  auto rest = trim(text.substr(start));
  if (has_word(rest)) out.emplace_back(rest);
  return out;
}

TokenIds encode_text(std::string_view text, const Vocab& vocab) {
  TokenIds ids;
  for (const auto& tok : tokenize(text)) ids.push_back(vocab.id(tok));
  return ids;
}

TokenIds flatten_history(std::span<const Turn> turns, const Vocab& vocab) {
  TokenIds ids;
  for (const auto& turn : turns) {
    ids.push_back(turn.speaker == Speaker::kAgent ? Vocab::kAgentStart : Vocab::kUserStart);
    for (const auto& tok : tokenize(turn.text)) ids.push_back(vocab.id(tok));
  }
  return ids;
}

std::string feature_token(std::string_view key, std::string_view value) {
  std::string s(key);
  s += '_';
  s += value;
  return s;
}

TokenIds serialize_features(const FeatureMap& features, const Vocab& vocab) {
  TokenIds ids;
  ids.reserve(features.size());
  for (const auto& [k, v] : features.entries()) ids.push_back(vocab.id(feature_token(k, v)));
  return ids;
}

Vocab build_vocab(std::span<const Dialogue> corpus, std::size_t cap) {
  if (cap < std::size_t(Vocab::kReserved)) {
    throw CorpusError("build_vocab: cap must be at least " + std::to_string(Vocab::kReserved));
  }
  if (corpus.empty()) throw CorpusError("build_vocab: empty corpus");
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& d : corpus) {
    for (const auto& t : d.turns)
      for (auto& tok : tokenize(t.text)) ++freq[std::move(tok)];
    for (const auto& [k, v] : d.profile.entries()) ++freq[feature_token(k, v)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  const std::size_t keep = std::min(ranked.size(), cap - std::size_t(Vocab::kReserved));
  std::vector<std::string> tokens;
  tokens.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) tokens.push_back(ranked[i].first);
  return Vocab(tokens);
}

std::vector<RankingContext> explode_dialogue(const Dialogue& d, const Vocab& vocab,
                                             const SequenceLimits& limits) {
  if (limits.history == 0 || limits.features == 0) {
    throw CorpusError("explode_dialogue: limits must be positive");
  }
  if (d.agent_turn_count() == 0) {
    throw CorpusError("explode_dialogue: dialogue '" + d.id + "' has no agent turns");
  }
  TokenIds features = serialize_features(d.profile, vocab);
  if (features.size() > limits.features) features.resize(limits.features);

  std::vector<RankingContext> out;
  TokenIds history;
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const Turn& turn = d.turns[i];
    if (turn.speaker == Speaker::kAgent) {
      RankingContext ctx;
      const std::size_t drop = history.size() > limits.history ? history.size() - limits.history : 0;
      ctx.history_tokens.assign(history.begin() + std::ptrdiff_t(drop), history.end());
      ctx.feature_tokens = features;
      ctx.gold_response_text = turn.text;
      ctx.dialogue_id = d.id;
      ctx.turn_index = int(i);
      if (i < d.gold_templates.size()) ctx.gold_template = d.gold_templates[i];
      out.push_back(std::move(ctx));
    }
    const TokenIds part = flatten_history(std::span<const Turn>(&turn, 1), vocab);
    history.insert(history.end(), part.begin(), part.end());
  }
  return out;
}

CorpusSplit split_corpus(std::span<const Dialogue> corpus, const SplitRatios& ratios,
                         std::uint64_t seed) {
  if (ratios.train < 0 || ratios.dev < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.dev + ratios.test - 1.0) > 1e-9) {
    throw CorpusError("split_corpus: ratios must be non-negative and sum to 1");
  }
  if (corpus.size() < 3) throw CorpusError("split_corpus: need at least 3 dialogues");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const double n = double(corpus.size());
  const auto n_train = std::size_t(std::floor(ratios.train * n + 1e-9));
  const auto n_dev = std::min(corpus.size() - n_train, std::size_t(std::floor(ratios.dev * n + 1e-9)));
  CorpusSplit split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Dialogue& d = corpus[order[i]];
    if (i < n_train) {
      split.train.push_back(d);
    } else if (i < n_train + n_dev) {
      split.dev.push_back(d);
    } else {
      split.test.push_back(d);
    }
  }
  return split;
}

}  // namespace tod::corpus
