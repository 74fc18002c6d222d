#pragma once

#include "tod/corpus/types.hpp"
#include "tod/miner/annotate.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tod::miner {

class MinerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SentenceRecord {
  std::string surface;
  std::vector<std::string> lemmas;  // content lemmas in order
  std::vector<Pos> pos;             // parallel to lemmas
  std::vector<std::string> unigrams;  // sorted, unique
  std::vector<std::string> bigrams;   // "a b", sorted, unique
  std::int64_t frequency = 1;
};

// Builds the n-gram sets from a lemma sequence.
SentenceRecord make_record(std::string surface, std::vector<std::string> lemmas, std::int64_t frequency = 1);

// Agent sentences only, one record per distinct surface form, in order of
// first appearance.
std::vector<SentenceRecord> preprocess_sentences(std::span<const corpus::Dialogue> corpus);

// Jaccard over sorted unique sets; empty vs empty is 1.
double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

// sqrt(J1 * J2), zero when either factor is zero.
double similarity(const SentenceRecord& s, const SentenceRecord& t);

struct KeywordCandidate {
  std::string lemma;
  std::int64_t frequency = 0;
};

// Verb and noun lemmas by total frequency (ties lexicographic).
std::vector<KeywordCandidate> select_keyword_candidates(std::span<const SentenceRecord> records,
                                                        std::size_t top_k);

struct MinerParams {
  double lambda = 0.4;
  std::int64_t f1 = 350;
  std::int64_t f2 = 15;
  std::vector<std::string> keywords = default_keywords();
  bool keyword_rule = true;

  void validate() const;
};

struct MinedTemplate {
  std::string text;
  std::int64_t frequency = 0;
  std::vector<std::string> lemmas;
};

// Admission order is preserved; surfaces listed in `exclude` are removed
// after mining.
std::vector<MinedTemplate> mine_pool(std::span<const SentenceRecord> records, const MinerParams& params,
                                     const std::vector<std::string>& exclude = {});

// Sentence BLEU-4 of `hypothesis` against one reference, on corpus tokens.
// Unigram precision is unsmoothed, higher orders use add-one smoothing, and
// the usual brevity penalty applies.
double sentence_bleu(const std::vector<std::string>& hypothesis, const std::vector<std::string>& reference);

struct CoverageMatch {
  std::string sentence;
  int best_template = -1;  // index into the pool; -1 when nothing scores
  double bleu = 0.0;
};

struct CoverageReport {
  std::size_t pool_size = 0;
  double mean_bleu = 0.0;
  std::vector<CoverageMatch> matches;
};

// One report per prefix size. Throws on an empty pool, empty held-out set,
// or sizes that are not ascending or exceed the pool.
std::vector<CoverageReport> coverage_bleu(const std::vector<std::string>& pool,
                                          std::span<const corpus::Dialogue> heldout,
                                          const std::vector<std::size_t>& prefix_sizes);

// Agent sentences of the held-out dialogues, in order.
std::vector<std::string> agent_sentences(std::span<const corpus::Dialogue> dialogues);

// One entry per line; blank lines and lines starting with '#' are skipped.
std::vector<std::string> load_word_list(const std::filesystem::path& path);
void save_word_list(const std::vector<std::string>& words, const std::filesystem::path& path);

}  // namespace tod::miner
