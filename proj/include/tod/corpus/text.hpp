#pragma once

#include "tod/corpus/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tod::corpus {

// Lowercases ASCII, splits on whitespace, and emits every ASCII punctuation
// character as its own token. Non-ASCII bytes are word characters.
std::vector<std::string> tokenize(std::string_view text);

// Splits on '.', '!' and '?' (a run of them ends one sentence). Returned
// sentences are trimmed and non-empty; the terminal punctuation is kept.
std::vector<std::string> split_sentences(std::string_view text);

// Speaker marker followed by the turn's tokens, for every turn in order.
TokenIds flatten_history(std::span<const Turn> turns, const Vocab& vocab);

// One `key_value` token per entry, in key order.
TokenIds serialize_features(const FeatureMap& features, const Vocab& vocab);

std::string feature_token(std::string_view key, std::string_view value);

TokenIds encode_text(std::string_view text, const Vocab& vocab);

// Top (cap - 5) tokens by corpus frequency plus the reserved entries; ties go
// to the lexicographically smaller token. Profile features count once per
// dialogue as their key_value token.
Vocab build_vocab(std::span<const Dialogue> corpus, std::size_t cap);

struct SequenceLimits {
  std::size_t history = 256;
  std::size_t features = 64;
};

// One context per agent turn; the history is every earlier turn flattened
// and left-truncated to the limit.
std::vector<RankingContext> explode_dialogue(const Dialogue& d, const Vocab& vocab,
                                             const SequenceLimits& limits);

struct CorpusSplit {
  std::vector<Dialogue> train;
  std::vector<Dialogue> dev;
  std::vector<Dialogue> test;
};

struct SplitRatios {
  double train = 0.90;
  double dev = 0.05;
  double test = 0.05;
};

CorpusSplit split_corpus(std::span<const Dialogue> corpus, const SplitRatios& ratios,
                         std::uint64_t seed);

}  // namespace tod::corpus
