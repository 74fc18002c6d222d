#include "tod/corpus/synthetic.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace tod::corpus {

using nlohmann::ordered_json;

bool condition_holds(const Condition& when, const FeatureMap& profile) {
  for (const auto& [key, allowed] : when) {
    auto v = profile.get(key);
    if (!v) return false;
    if (std::find(allowed.begin(), allowed.end(), *v) == allowed.end()) return false;
  }
  return true;
}

void SyntheticConfig::validate() const {
  if (intents.empty()) throw CorpusError("synthetic config: at least one intent flow is required");
  if (dialogues < 0) throw CorpusError("synthetic config: dialogue count must be non-negative");
  for (double r : {noise.agent, noise.user}) {
    if (!(r >= 0.0 && r <= 1.0)) throw CorpusError("synthetic config: noise rate outside [0,1]");
  }
  for (const auto& f : features) {
    if (!is_feature_identifier(f.key) || f.values.empty()) {
      throw CorpusError("synthetic config: bad feature spec '" + f.key + "'");
    }
    for (const auto& v : f.values) {
      if (!is_feature_identifier(v)) throw CorpusError("synthetic config: bad value '" + v + "'");
    }
    if (!f.weights.empty() && f.weights.size() != f.values.size()) {
      throw CorpusError("synthetic config: weights of '" + f.key + "' do not match its values");
    }
  }
  std::set<int> ids;
  for (const auto& t : templates) {
    if (!ids.insert(t.id).second) throw CorpusError("synthetic config: duplicate template id " + std::to_string(t.id));
    if (t.text.empty()) throw CorpusError("synthetic config: empty template text");
  }
  for (const auto& intent : intents) {
    if (intent.openings.empty()) {
      throw CorpusError("synthetic config: intent '" + intent.name + "' has no opening utterances");
    }
    if (intent.free_form) {
      if (generated_bank.count <= 0) {
        throw CorpusError("synthetic config: free-form intent '" + intent.name + "' needs a generated bank");
      }
      if (intent.min_free_turns < 1 || intent.max_free_turns < intent.min_free_turns) {
        throw CorpusError("synthetic config: bad free-form turn range in '" + intent.name + "'");
      }
      continue;
    }
    std::unordered_map<std::string, const FlowState*> by_name;
    for (const auto& s : intent.states) {
      if (!by_name.emplace(s.name, &s).second) {
        throw CorpusError("synthetic config: duplicate state '" + s.name + "' in '" + intent.name + "'");
      }
      if (s.agent.empty()) throw CorpusError("synthetic config: state '" + s.name + "' has no agent branch");
      for (const auto& b : s.agent) {
        if (!ids.count(b.template_id)) {
          throw CorpusError("synthetic config: state '" + s.name + "' references unknown template " +
                            std::to_string(b.template_id));
        }
      }
      for (const auto& u : s.user) {
        if (!by_name.count(u.next) &&
            std::none_of(intent.states.begin(), intent.states.end(),
                         [&](const FlowState& o) { return o.name == u.next; })) {
          throw CorpusError("synthetic config: state '" + s.name + "' links to unknown state '" + u.next + "'");
        }
        if (u.texts.empty()) throw CorpusError("synthetic config: user option without texts in '" + s.name + "'");
      }
    }
    if (!by_name.count(intent.start)) {
      throw CorpusError("synthetic config: intent '" + intent.name + "' has unknown start state");
    }
    // Every state reachable from start must be able to reach a terminal one.
    std::set<std::string> reachable;
    std::vector<std::string> stack{intent.start};
    while (!stack.empty()) {
      auto cur = stack.back();
      stack.pop_back();
      if (!reachable.insert(cur).second) continue;
      for (const auto& u : by_name.at(cur)->user) stack.push_back(u.next);
    }
    std::set<std::string> can_finish;
    bool changed = true;
    while (changed) {
      changed = false;
      for (const auto& name : reachable) {
        if (can_finish.count(name)) continue;
        const FlowState* s = by_name.at(name);
        bool ok = s->terminal || s->user.empty();
        for (const auto& u : s->user) ok = ok || can_finish.count(u.next) > 0;
        if (ok) {
          can_finish.insert(name);
          changed = true;
        }
      }
    }
    if (can_finish.size() != reachable.size()) {
      throw CorpusError("synthetic config: flow '" + intent.name + "' has no terminal state reachable from every state");
    }
  }
}

namespace {

ordered_json condition_json(const Condition& c) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : c) j[k] = v;
  return j;
}

Condition condition_from(const ordered_json& j) {
  Condition c;
  if (j.is_null()) return c;
  for (const auto& [k, v] : j.items()) c[k] = v.get<std::vector<std::string>>();
  return c;
}

}  // namespace

std::string config_to_json(const SyntheticConfig& config) {
  ordered_json j;
  j["dialogues"] = config.dialogues;
  j["noise"] = {{"agent", config.noise.agent}, {"user", config.noise.user}};
  j["max_agent_turns"] = config.max_agent_turns;
  ordered_json features = ordered_json::array();
  for (const auto& f : config.features) {
    ordered_json fj = {{"key", f.key}, {"values", f.values}};
    if (!f.weights.empty()) fj["weights"] = f.weights;
    features.push_back(std::move(fj));
  }
  j["features"] = std::move(features);
  ordered_json templates = ordered_json::array();
  for (const auto& t : config.templates) {
    ordered_json tj = {{"id", t.id}, {"text", t.text}};
    if (!t.constraints.empty()) tj["constraints"] = condition_json(t.constraints);
    templates.push_back(std::move(tj));
  }
  j["templates"] = std::move(templates);
  j["generated_bank"] = {{"count", config.generated_bank.count},
                         {"zipf", config.generated_bank.zipf},
                         {"seed", config.generated_bank.seed}};
  ordered_json intents = ordered_json::array();
  for (const auto& in : config.intents) {
    ordered_json ij = {{"name", in.name}, {"weight", in.weight}, {"openings", in.openings}};
    if (in.free_form) {
      ij["free_form"] = {{"min_turns", in.min_free_turns}, {"max_turns", in.max_free_turns}};
    } else {
      ij["start"] = in.start;
      ordered_json states = ordered_json::array();
      for (const auto& s : in.states) {
        ordered_json sj = {{"name", s.name}};
        ordered_json agent = ordered_json::array();
        for (const auto& b : s.agent) {
          ordered_json bj = {{"template", b.template_id}};
          if (!b.when.empty()) bj["when"] = condition_json(b.when);
          agent.push_back(std::move(bj));
        }
        sj["agent"] = std::move(agent);
        ordered_json user = ordered_json::array();
        for (const auto& u : s.user) {
          ordered_json uj = {{"texts", u.texts}, {"next", u.next}, {"weight", u.weight}};
          if (!u.when.empty()) uj["when"] = condition_json(u.when);
          user.push_back(std::move(uj));
        }
        if (!user.empty()) sj["user"] = std::move(user);
        if (s.terminal) sj["terminal"] = true;
        states.push_back(std::move(sj));
      }
      ij["states"] = std::move(states);
    }
    intents.push_back(std::move(ij));
  }
  j["intents"] = std::move(intents);
  return j.dump(2);
}

SyntheticConfig config_from_json(const std::string& text) {
  SyntheticConfig c;
  try {
    const ordered_json j = ordered_json::parse(text);
    c.dialogues = j.value("dialogues", c.dialogues);
    if (j.contains("noise")) {
      c.noise.agent = j["noise"].value("agent", c.noise.agent);
      c.noise.user = j["noise"].value("user", c.noise.user);
    }
    c.max_agent_turns = j.value("max_agent_turns", c.max_agent_turns);
    for (const auto& f : j.value("features", ordered_json::array())) {
      FeatureSpec spec;
      spec.key = f.at("key").get<std::string>();
      spec.values = f.at("values").get<std::vector<std::string>>();
      if (f.contains("weights")) spec.weights = f["weights"].get<std::vector<double>>();
      c.features.push_back(std::move(spec));
    }
    for (const auto& t : j.value("templates", ordered_json::array())) {
      c.templates.push_back({t.at("id").get<int>(), t.at("text").get<std::string>(),
                             condition_from(t.value("constraints", ordered_json()))});
    }
    if (j.contains("generated_bank")) {
      const auto& g = j["generated_bank"];
      c.generated_bank.count = g.value("count", 0);
      c.generated_bank.zipf = g.value("zipf", c.generated_bank.zipf);
      c.generated_bank.seed = g.value("seed", c.generated_bank.seed);
    }
    for (const auto& ij : j.at("intents")) {
      IntentFlow in;
      in.name = ij.at("name").get<std::string>();
      in.weight = ij.value("weight", 1.0);
      in.openings = ij.at("openings").get<std::vector<std::string>>();
      if (ij.contains("free_form")) {
        in.free_form = true;
        in.min_free_turns = ij["free_form"].value("min_turns", in.min_free_turns);
        in.max_free_turns = ij["free_form"].value("max_turns", in.max_free_turns);
      } else {
        in.start = ij.at("start").get<std::string>();
        for (const auto& sj : ij.at("states")) {
          FlowState s;
          s.name = sj.at("name").get<std::string>();
          for (const auto& bj : sj.at("agent")) {
            s.agent.push_back({condition_from(bj.value("when", ordered_json())), bj.at("template").get<int>()});
          }
          for (const auto& uj : sj.value("user", ordered_json::array())) {
            s.user.push_back({condition_from(uj.value("when", ordered_json())),
                              uj.at("texts").get<std::vector<std::string>>(),
                              uj.at("next").get<std::string>(), uj.value("weight", 1.0)});
          }
          s.terminal = sj.value("terminal", false);
          in.states.push_back(std::move(s));
        }
      }
      c.intents.push_back(std::move(in));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorpusError(std::string("synthetic config: ") + e.what());
  }
  c.validate();
  return c;
}

SyntheticConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open synthetic config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

namespace {

const std::vector<std::string> kBankOpeners = {"I will", "I can", "We will", "We can", "Let me"};
const std::vector<std::string> kBankVerbs = {
    "check",   "confirm", "issue",    "process", "cancel",   "update",  "track",       "verify",
    "arrange", "apply",   "review",   "resolve", "escalate", "expedite", "replace",    "waive",
    "extend",  "send",    "print",    "refund",  "ship",     "reorder", "investigate", "register",
    "request", "scan",    "transfer", "deliver", "restock",  "email"};
const std::vector<std::string> kBankNouns = {
    "refund",   "order",        "package",   "label",     "account",      "address",
    "card",     "payment",      "shipment",  "replacement", "fee",        "warranty",
    "receipt",  "invoice",      "balance",   "claim",     "code",         "delivery",
    "discount", "exchange",     "item",      "link",      "locker",       "pickup",
    "promotion", "subscription", "confirmation", "certificate", "reimbursement", "voucher"};
const std::vector<std::string> kBankAdjectives = {"new",     "full",   "original", "prepaid", "free",
                                                  "partial", "correct", "second",  "final",   "special"};
const std::vector<std::string> kBankTails = {"for you",          "today",       "right now",
                                             "by email",         "on your account", "at no cost",
                                             "within two days",  "this week",   "as soon as possible",
                                             "before the weekend", ""};

const std::vector<std::string> kFillers = {"Okay,", "Sure,", "Alright,", "Well,", "So,"};
const std::vector<std::string> kTails = {" for you", " then", " too"};
const std::vector<std::pair<std::string, std::string>> kSynonyms = {
    {"help", "assist"},        {"check", "look into"},    {"order", "purchase"},
    {"item", "product"},       {"send", "mail"},          {"issue", "problem"},
    {"email", "e-mail"},       {"receive", "get"},        {"update", "change"},
    {"arrive", "show up"},     {"soon", "shortly"},       {"package", "parcel"},
    {"refund", "reimbursement"}, {"confirm", "verify"},   {"fee", "charge"},
    {"within", "in"},          {"today", "now"},          {"can", "could"},
    {"will", "shall"},         {"new", "fresh"},          {"thank", "thanks"},
    {"great", "good"},         {"anything", "something"}, {"sorry", "apologies"}};

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> words;
  std::istringstream in(s);
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string lower_ascii(std::string s) {
  for (auto& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::string with_filler(std::vector<std::string> words, std::mt19937_64& rng) {
  if (!words.empty() && words[0] != "I" && words[0].size() > 0 && !words[0].starts_with("I'")) {
    words[0][0] = char(std::tolower(static_cast<unsigned char>(words[0][0])));
  }
  words.insert(words.begin(), kFillers[pick(rng, kFillers.size())]);
  return join_words(words);
}

}  // namespace

std::string paraphrase(const std::string& sentence, std::mt19937_64& rng) {
  auto words = split_words(sentence);
  if (words.empty()) return sentence;
  // Detach terminal punctuation so edits land before it.
  std::string terminal;
  while (!words.back().empty() && std::string_view(".?!").find(words.back().back()) != std::string_view::npos) {
    terminal.insert(terminal.begin(), words.back().back());
    words.back().pop_back();
  }
  if (words.back().empty()) words.pop_back();
  if (words.empty()) return sentence;

  std::string out;
  switch (pick(rng, 4)) {
    case 0:
      out = with_filler(words, rng);
      break;
    case 1: {
      std::string last = words.back();
      std::string trailing_comma;
      if (!last.empty() && last.back() == ',') last.pop_back();
      words.back() = last + kTails[pick(rng, kTails.size())];
      out = join_words(words);
      break;
    }
    case 2: {
      std::vector<std::pair<std::size_t, std::size_t>> hits;  // (word index, synonym index)
      for (std::size_t i = 0; i < words.size(); ++i) {
        std::string core = lower_ascii(words[i]);
        while (!core.empty() && std::ispunct(static_cast<unsigned char>(core.back()))) core.pop_back();
        for (std::size_t s = 0; s < kSynonyms.size(); ++s)
          if (kSynonyms[s].first == core) hits.emplace_back(i, s);
      }
      if (hits.empty()) {
        out = with_filler(words, rng);
        break;
      }
      auto [wi, si] = hits[pick(rng, hits.size())];
      std::string suffix;
      std::string& w = words[wi];
      while (!w.empty() && std::ispunct(static_cast<unsigned char>(w.back()))) {
        suffix.insert(suffix.begin(), w.back());
        w.pop_back();
      }
      std::string repl = kSynonyms[si].second;
      if (std::isupper(static_cast<unsigned char>(w[0]))) repl[0] = char(std::toupper(static_cast<unsigned char>(repl[0])));
      w = repl + suffix;
      out = join_words(words);
      break;
    }
    default: {
      if (words.size() < 4) {
        out = with_filler(words, rng);
        break;
      }
      const std::size_t drop = 1 + pick(rng, words.size() - 1);
      words.erase(words.begin() + std::ptrdiff_t(drop));
      out = join_words(words);
      break;
    }
  }
  return out + terminal;
}

std::vector<GoldTemplate> gold_bank(const SyntheticConfig& config) {
  std::vector<GoldTemplate> bank = config.templates;
  const int count = config.generated_bank.count;
  if (count <= 0) return bank;
  int next_id = 0;
  for (const auto& t : bank) next_id = std::max(next_id, t.id + 1);

  // Distinct (verb, adjective, noun, tail) combinations in a seeded order.
  const std::size_t total = kBankVerbs.size() * kBankAdjectives.size() * kBankNouns.size() * kBankTails.size();
  if (std::size_t(count) > total) throw CorpusError("generated bank larger than the phrase space");
  std::mt19937_64 rng(config.generated_bank.seed);
  std::set<std::size_t> used;
  while (int(used.size()) < count) {
    const std::size_t code = pick(rng, total);
    if (!used.insert(code).second) continue;
    std::size_t c = code;
    const auto& tail = kBankTails[c % kBankTails.size()];
    c /= kBankTails.size();
    const auto& noun = kBankNouns[c % kBankNouns.size()];
    c /= kBankNouns.size();
    const auto& adj = kBankAdjectives[c % kBankAdjectives.size()];
    c /= kBankAdjectives.size();
    const auto& verb = kBankVerbs[c % kBankVerbs.size()];
    const auto& opener = kBankOpeners[pick(rng, kBankOpeners.size())];
    std::string text = opener + " " + verb + " the " + adj + " " + noun;
    if (!tail.empty()) text += " " + tail;
    text += ".";
    bank.push_back({next_id++, text, {}});
  }
  return bank;
}

namespace {

std::string fill_number(std::string text, std::mt19937_64& rng) {
  const auto pos = text.find("{num}");
  if (pos == std::string::npos) return text;
  const int n = std::uniform_int_distribution<int>(1000, 9999)(rng);
  return text.replace(pos, 5, std::to_string(n));
}

template <typename W>
std::size_t weighted(std::mt19937_64& rng, const W& weights) {
  std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
  return dist(rng);
}

}  // namespace

std::vector<Dialogue> generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
  config.validate();
  const auto bank = gold_bank(config);
  std::unordered_map<int, const GoldTemplate*> by_id;
  for (const auto& t : bank) by_id[t.id] = &t;

  std::vector<int> generated_ids;
  std::vector<double> zipf_weights;
  for (std::size_t i = config.templates.size(); i < bank.size(); ++i) {
    generated_ids.push_back(bank[i].id);
    zipf_weights.push_back(1.0 / std::pow(double(generated_ids.size()), config.generated_bank.zipf));
  }
  std::discrete_distribution<std::size_t> zipf(zipf_weights.begin(), zipf_weights.end());

  std::vector<double> intent_weights;
  for (const auto& in : config.intents) intent_weights.push_back(in.weight);

  const std::vector<std::string> fillers = {"ok", "sure", "i see", "alright, thanks", "got it", "okay"};

  std::mt19937_64 rng(seed);
  std::bernoulli_distribution agent_noise(config.noise.agent);
  std::bernoulli_distribution user_noise(config.noise.user);

  std::vector<Dialogue> out;
  out.reserve(std::size_t(config.dialogues));
  for (int n = 0; n < config.dialogues; ++n) {
    Dialogue d;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "d%06d", n);
    d.id = buf;
    const IntentFlow& intent = config.intents[weighted(rng, intent_weights)];
    d.intent = intent.name;
    for (const auto& f : config.features) {
      const std::size_t v = f.weights.empty() ? pick(rng, f.values.size()) : weighted(rng, f.weights);
      d.profile.set(f.key, f.values[v]);
    }
    auto add_user = [&](const std::string& text) {
      std::string t = fill_number(text, rng);
      if (user_noise(rng)) t = paraphrase(t, rng);
      d.turns.push_back({Speaker::kUser, t});
      d.gold_templates.push_back(kNoTemplate);
    };
    auto add_agent = [&](int template_id) {
      std::string t = by_id.at(template_id)->text;
      if (agent_noise(rng)) t = paraphrase(t, rng);
      d.turns.push_back({Speaker::kAgent, t});
      d.gold_templates.push_back(template_id);
    };

    add_user(intent.openings[pick(rng, intent.openings.size())]);
    if (intent.free_form) {
      const int turns = std::uniform_int_distribution<int>(intent.min_free_turns, intent.max_free_turns)(rng);
      for (int t = 0; t < turns; ++t) {
        if (t > 0) add_user(fillers[pick(rng, fillers.size())]);
        add_agent(generated_ids[zipf(rng)]);
      }
    } else {
      const FlowState* state = nullptr;
      auto find_state = [&](const std::string& name) {
        for (const auto& s : intent.states)
          if (s.name == name) return &s;
        throw CorpusError("unknown state " + name);
      };
      state = find_state(intent.start);
      int agent_turns = 0;
      while (true) {
        const AgentBranch* branch = nullptr;
        for (const auto& b : state->agent) {
          if (condition_holds(b.when, d.profile)) {
            branch = &b;
            break;
          }
        }
        if (branch == nullptr) {
          throw CorpusError("state '" + state->name + "' of '" + intent.name + "' has no branch for profile");
        }
        add_agent(branch->template_id);
        ++agent_turns;
        if (state->terminal || agent_turns >= config.max_agent_turns) break;
        std::vector<const UserOption*> options;
        std::vector<double> weights;
        for (const auto& u : state->user) {
          if (condition_holds(u.when, d.profile)) {
            options.push_back(&u);
            weights.push_back(u.weight);
          }
        }
        if (options.empty()) break;
        const UserOption* choice = options[weighted(rng, weights)];
        add_user(choice->texts[pick(rng, choice->texts.size())]);
        state = find_state(choice->next);
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace tod::corpus
