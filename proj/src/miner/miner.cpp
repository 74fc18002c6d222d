#include "tod/miner/miner.hpp"

#include "tod/corpus/text.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace tod::miner {
namespace {

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

SentenceRecord make_record(std::string surface, std::vector<std::string> lemmas, std::int64_t frequency) {
  SentenceRecord r;
  r.surface = std::move(surface);
  r.frequency = frequency;
  std::vector<std::string> bigrams;
  for (std::size_t i = 0; i + 1 < lemmas.size(); ++i) bigrams.push_back(lemmas[i] + " " + lemmas[i + 1]);
  r.unigrams = sorted_unique(lemmas);
  r.bigrams = sorted_unique(std::move(bigrams));
  r.lemmas = std::move(lemmas);
  return r;
}

std::vector<SentenceRecord> preprocess_sentences(std::span<const corpus::Dialogue> corpus) {
  std::vector<SentenceRecord> records;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& d : corpus) {
    for (const auto& turn : d.turns) {
      if (turn.speaker != corpus::Speaker::kAgent) continue;
      for (auto& sentence : corpus::split_sentences(turn.text)) {
        if (auto it = index.find(sentence); it != index.end()) {
          ++records[it->second].frequency;
          continue;
        }
        std::vector<std::string> lemmas;
        std::vector<Pos> pos;
        for (auto& t : annotate(sentence)) {
          if (!is_content(t.pos)) continue;
          lemmas.push_back(std::move(t.lemma));
          pos.push_back(t.pos);
        }
        index.emplace(sentence, records.size());
        auto r = make_record(sentence, std::move(lemmas), 1);
        r.pos = std::move(pos);
        records.push_back(std::move(r));
      }
    }
  }
  return records;
}

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++inter;
      ++i;
      ++j;
    }
  }
  return double(inter) / double(a.size() + b.size() - inter);
}

double similarity(const SentenceRecord& s, const SentenceRecord& t) {
  const double j1 = jaccard(s.unigrams, t.unigrams);
  if (j1 == 0.0) return 0.0;
  const double j2 = jaccard(s.bigrams, t.bigrams);
  if (j2 == 0.0) return 0.0;
  return std::exp((std::log(j1) + std::log(j2)) / 2.0);
}

std::vector<KeywordCandidate> select_keyword_candidates(std::span<const SentenceRecord> records,
                                                        std::size_t top_k) {
  std::map<std::string, std::int64_t> freq;
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.lemmas.size(); ++i) {
      const Pos p = i < r.pos.size() ? r.pos[i] : guess_pos(r.lemmas[i], r.lemmas[i]);
      if (p == Pos::kNoun || p == Pos::kVerb) freq[r.lemmas[i]] += r.frequency;
    }
  }
  std::vector<KeywordCandidate> out;
  for (const auto& [lemma, f] : freq) out.push_back({lemma, f});
  std::stable_sort(out.begin(), out.end(),
                   [](const KeywordCandidate& a, const KeywordCandidate& b) { return a.frequency > b.frequency; });
  if (out.size() > top_k) out.resize(top_k);
  return out;
}

void MinerParams::validate() const {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw MinerError("lambda must be in (0, 1]");
  if (f2 < 1 || f1 < f2) throw MinerError("frequency floors must satisfy f1 >= f2 >= 1");
  if (keyword_rule && keywords.empty()) throw MinerError("keyword rule enabled with an empty keyword list");
}

std::vector<MinedTemplate> mine_pool(std::span<const SentenceRecord> records, const MinerParams& params,
                                     const std::vector<std::string>& exclude) {
  params.validate();
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].frequency != records[b].frequency) return records[a].frequency > records[b].frequency;
    return records[a].surface < records[b].surface;
  });
  const std::unordered_set<std::string> kw(params.keywords.begin(), params.keywords.end());

  std::vector<std::size_t> selected;
  for (std::size_t idx : order) {
    const SentenceRecord& s = records[idx];
    // Records are frequency-sorted, so nothing below the floor can follow.
    if (s.frequency <= (params.keyword_rule ? params.f2 : params.f1)) break;
    double best = 0.0;
    for (std::size_t t : selected) {
      best = std::max(best, similarity(s, records[t]));
      if (best >= params.lambda) break;
    }
    if (best >= params.lambda) continue;
    bool admit = s.frequency > params.f1;
    if (!admit && params.keyword_rule && s.frequency > params.f2) {
      admit = std::any_of(s.unigrams.begin(), s.unigrams.end(), [&](const std::string& l) { return kw.count(l) > 0; });
    }
    if (admit) selected.push_back(idx);
  }

  const std::unordered_set<std::string> excluded(exclude.begin(), exclude.end());
  std::vector<MinedTemplate> pool;
  for (std::size_t idx : selected) {
    const auto& r = records[idx];
    if (excluded.count(r.surface)) continue;
    pool.push_back({r.surface, r.frequency, r.lemmas});
  }
  return pool;
}

namespace {

// N-gram multiset of one sentence as sorted (gram id, count) pairs per order.
struct NgramProfile {
  std::size_t length = 0;
  std::array<std::vector<std::pair<std::uint64_t, int>>, 4> grams;
};

class Interner {
 public:
  std::uint64_t id(const std::string& s) {
    auto [it, inserted] = ids_.emplace(s, ids_.size() + 1);
    return it->second;
  }

 private:
  std::unordered_map<std::string, std::uint64_t> ids_;
};

NgramProfile profile_of(const std::vector<std::string>& tokens, Interner& interner) {
  NgramProfile p;
  p.length = tokens.size();
  std::vector<std::uint64_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(interner.id(t));
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<std::uint64_t, int> counts;
    for (std::size_t i = 0; i + n <= ids.size(); ++i) {
      std::uint64_t h = 1469598103934665603ull;
      for (std::size_t k = 0; k < n; ++k) h = (h ^ ids[i + k]) * 1099511628211ull;
      ++counts[h];
    }
    p.grams[n - 1].assign(counts.begin(), counts.end());
  }
  return p;
}

double bleu_from_profiles(const NgramProfile& hyp, const NgramProfile& ref) {
  if (hyp.length == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto& h = hyp.grams[n - 1];
    const auto& r = ref.grams[n - 1];
    int matches = 0;
    auto i = h.begin();
    auto j = r.begin();
    while (i != h.end() && j != r.end()) {
      if (i->first < j->first) {
        ++i;
      } else if (j->first < i->first) {
        ++j;
      } else {
        matches += std::min(i->second, j->second);
        ++i;
        ++j;
      }
    }
    const double total = hyp.length >= n ? double(hyp.length - n + 1) : 0.0;
    double p;
    if (n == 1) {
      if (matches == 0) return 0.0;
      p = matches / total;
    } else {
      p = (matches + 1.0) / (total + 1.0);
    }
    log_sum += std::log(p);
  }
  const double c = double(hyp.length);
  const double rlen = double(ref.length);
  const double bp = c >= rlen ? 1.0 : std::exp(1.0 - rlen / c);
  return bp * std::exp(log_sum / 4.0);
}

}  // namespace

double sentence_bleu(const std::vector<std::string>& hypothesis, const std::vector<std::string>& reference) {
  Interner interner;
  return bleu_from_profiles(profile_of(hypothesis, interner), profile_of(reference, interner));
}

std::vector<std::string> agent_sentences(std::span<const corpus::Dialogue> dialogues) {
  std::vector<std::string> out;
  for (const auto& d : dialogues) {
    for (const auto& t : d.turns) {
      if (t.speaker != corpus::Speaker::kAgent) continue;
      for (auto& s : corpus::split_sentences(t.text)) out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<CoverageReport> coverage_bleu(const std::vector<std::string>& pool,
                                          std::span<const corpus::Dialogue> heldout,
                                          const std::vector<std::size_t>& prefix_sizes) {
  if (pool.empty()) throw MinerError("coverage_bleu: empty pool");
  const auto sentences = agent_sentences(heldout);
  if (sentences.empty()) throw MinerError("coverage_bleu: held-out set has no agent sentences");
  for (std::size_t i = 0; i < prefix_sizes.size(); ++i) {
    if (prefix_sizes[i] == 0 || prefix_sizes[i] > pool.size()) {
      throw MinerError("coverage_bleu: prefix size " + std::to_string(prefix_sizes[i]) + " outside pool");
    }
    if (i > 0 && prefix_sizes[i] < prefix_sizes[i - 1]) throw MinerError("coverage_bleu: sizes must ascend");
  }

  Interner interner;
  std::vector<NgramProfile> templates;
  templates.reserve(pool.size());
  for (const auto& t : pool) templates.push_back(profile_of(corpus::tokenize(t), interner));

  std::vector<CoverageReport> reports(prefix_sizes.size());
  for (std::size_t p = 0; p < prefix_sizes.size(); ++p) {
    reports[p].pool_size = prefix_sizes[p];
    reports[p].matches.reserve(sentences.size());
  }
  // Running argmax over the pool, snapshotted at every prefix boundary.
  // Repeated sentences reuse the first result.
  std::unordered_map<std::string, std::vector<std::pair<int, double>>> seen;
  for (const auto& sentence : sentences) {
    auto [it, fresh] = seen.try_emplace(sentence);
    if (fresh) {
      const NgramProfile ref = profile_of(corpus::tokenize(sentence), interner);
      double best = 0.0;
      int best_idx = -1;
      std::size_t next_prefix = 0;
      for (std::size_t m = 0; m < pool.size() && next_prefix < prefix_sizes.size(); ++m) {
        const double b = bleu_from_profiles(templates[m], ref);
        if (b > best) {
          best = b;
          best_idx = int(m);
        }
        while (next_prefix < prefix_sizes.size() && prefix_sizes[next_prefix] == m + 1) {
          it->second.emplace_back(best_idx, best);
          ++next_prefix;
        }
      }
    }
    for (std::size_t p = 0; p < prefix_sizes.size(); ++p) {
      reports[p].matches.push_back({sentence, it->second[p].first, it->second[p].second});
    }
  }
  for (auto& r : reports) {
    double sum = 0.0;
    for (const auto& m : r.matches) sum += m.bleu;
    r.mean_bleu = sum / double(r.matches.size());
  }
  return reports;
}

std::vector<std::string> load_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MinerError("cannot open " + path.string());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    out.push_back(line.substr(start));
  }
  return out;
}

void save_word_list(const std::vector<std::string>& words, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw MinerError("cannot write " + path.string());
  for (const auto& w : words) out << w << '\n';
}

}  // namespace tod::miner
