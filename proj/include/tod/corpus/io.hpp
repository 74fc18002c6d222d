#pragma once

#include "tod/corpus/types.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace tod::corpus {

// Corpus files are UTF-8, one JSON object per line. The first line is the
// header {"format":"tod-corpus","version":N}; every following line is one
// dialogue:
//   {"id":..,"intent":..,"profile":{key:value},"turns":[{"speaker":..,"text":..}],
//    "gold":[template id or -1 per turn]}   ("gold" optional)
inline constexpr int kCorpusSchemaVersion = 1;

struct Diagnostic {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct LoadResult {
  std::vector<Dialogue> dialogues;
  std::vector<Diagnostic> diagnostics;
};

struct LoadOptions {
  int schema_version = kCorpusSchemaVersion;
  // Loading aborts with CorpusError once more malformed lines than this
  // have been collected.
  std::size_t max_errors = 100;
};

// Throws CorpusError for a missing file, a header/schema mismatch, or too
// many malformed records. An empty file yields an empty result.
LoadResult load_corpus(const std::filesystem::path& path, const LoadOptions& options = {});
LoadResult read_corpus(std::istream& in, const LoadOptions& options = {});

void save_corpus(std::span<const Dialogue> corpus, const std::filesystem::path& path);
void write_corpus(std::span<const Dialogue> corpus, std::ostream& out);

// Throws CorpusError on invariant violations (empty turn text, no agent turn).
void validate_dialogue(const Dialogue& d);

std::string dialogue_to_json_line(const Dialogue& d);
Dialogue dialogue_from_json_line(const std::string& line);

}  // namespace tod::corpus
