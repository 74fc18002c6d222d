#pragma once

#include "tod/corpus/types.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace tod::corpus {

// Feature key -> allowed values. Empty means "always".
using Condition = std::map<std::string, std::vector<std::string>>;

bool condition_holds(const Condition& when, const FeatureMap& profile);

struct FeatureSpec {
  std::string key;
  std::vector<std::string> values;
  std::vector<double> weights;  // same length as values; empty = uniform
};

struct GoldTemplate {
  int id = 0;
  std::string text;
  // Profile constraints the template is only valid under; exported to the
  // pool so constraint filtering can be evaluated against the generator.
  Condition constraints;
};

struct AgentBranch {
  Condition when;
  int template_id = kNoTemplate;
};

struct UserOption {
  Condition when;
  std::vector<std::string> texts;  // one drawn uniformly; "{num}" is replaced by digits
  std::string next;
  double weight = 1.0;
};

struct FlowState {
  std::string name;
  std::vector<AgentBranch> agent;  // first matching branch speaks
  std::vector<UserOption> user;    // empty for terminal states
  bool terminal = false;
};

struct IntentFlow {
  std::string name;
  double weight = 1.0;
  std::vector<std::string> openings;  // user utterances that open the dialogue
  std::string start;
  std::vector<FlowState> states;
  // When set, the dialogue is free-form: `free_turns` agent turns drawn from
  // the Zipf-weighted generated bank, separated by user fillers.
  bool free_form = false;
  int min_free_turns = 3;
  int max_free_turns = 8;
};

struct GeneratedBank {
  int count = 0;
  double zipf = 1.1;
  std::uint64_t seed = 7;
};

struct NoiseRates {
  double agent = 0.2;  // probability an agent sentence is paraphrased
  double user = 0.1;
};

struct SyntheticConfig {
  int dialogues = 1000;
  NoiseRates noise;
  int max_agent_turns = 40;
  std::vector<FeatureSpec> features;
  std::vector<GoldTemplate> templates;
  GeneratedBank generated_bank;
  std::vector<IntentFlow> intents;

  // Throws CorpusError: no intents, noise outside [0,1], unknown state or
  // template references, or a flow whose reachable graph cannot terminate.
  void validate() const;
};

std::string config_to_json(const SyntheticConfig& config);
SyntheticConfig config_from_json(const std::string& text);
SyntheticConfig load_config(const std::string& path);

// Explicit templates plus the procedurally generated bank (ids continue
// after the explicit ones).
std::vector<GoldTemplate> gold_bank(const SyntheticConfig& config);

// Deterministic in (config, seed). Agent turns carry their latent gold
// template id in Dialogue::gold_templates.
std::vector<Dialogue> generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

// Applies one paraphrase perturbation (filler, tail, synonym swap or word
// drop) to a sentence.
std::string paraphrase(const std::string& sentence, std::mt19937_64& rng);

// Ten customer-service intents with ten gold templates each, feature
// conditioned policy branches and constraint annotations.
SyntheticConfig desk_config(int dialogues = 2000);

// Free-form corpus over a large Zipf-weighted bank, used for pool coverage.
SyntheticConfig coverage_config(int dialogues, int bank_size, double zipf);

}  // namespace tod::corpus
