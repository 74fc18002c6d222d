#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tod::miner {

enum class Pos { kNoun, kVerb, kAdjective, kAdverb, kFunction };

struct AnnotatedToken {
  std::string surface;  // lowercased word
  std::string lemma;
  Pos pos = Pos::kFunction;
};

// Rule-and-lexicon annotator. Words are lowercased runs of letters, digits,
// inner hyphens and apostrophes; punctuation is dropped. Contractions are
// split ("won't" -> will + not). Lemmas come from an irregular-form table,
// then suffix stripping validated against the embedded lexicon, then a
// conservative fallback that only strips plural "s".
std::vector<AnnotatedToken> annotate(std::string_view sentence);

// Content lemmas (noun, verb, adjective, adverb) in sentence order.
std::vector<std::string> content_lemmas(std::string_view sentence);

std::string lemmatize(std::string_view word);
Pos guess_pos(std::string_view lemma, std::string_view surface);

bool is_content(Pos pos);
std::string_view to_string(Pos pos);

// The 215 curated keyword lemmas used for template selection.
const std::vector<std::string>& default_keywords();

}  // namespace tod::miner
