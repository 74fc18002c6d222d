#include "tod/registry/registry.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace tod::registry {

using nlohmann::ordered_json;

ActionSet::ActionSet()
    : names_{"apply_gift_card", "cancel_order",   "cancel_renewal", "create_exchange", "create_return_label",
             "file_claim",      "issue_refund",   "open_trace",     "reverse_charge",  "send_confirmation",
             "update_address"} {}

const Template* Pool::find(int id) const {
  for (const auto& t : templates)
    if (t.id == id) return &t;
  return nullptr;
}

std::vector<std::string> Pool::texts() const {
  std::vector<std::string> out;
  out.reserve(templates.size());
  for (const auto& t : templates) out.push_back(t.text);
  return out;
}

void validate_pool(const Pool& pool, const ActionSet& actions) {
  std::unordered_map<int, std::size_t> seen;
  for (std::size_t i = 0; i < pool.templates.size(); ++i) {
    const Template& t = pool.templates[i];
    if (auto [it, inserted] = seen.emplace(t.id, i); !inserted) {
      throw RegistryError("duplicate template id " + std::to_string(t.id) + " in records " +
                          std::to_string(it->second + 1) + " and " + std::to_string(i + 1));
    }
    if (t.text.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw RegistryError("template " + std::to_string(t.id) + " has empty text");
    }
    if (t.action && !actions.contains(t.action->name)) {
      throw RegistryError("template " + std::to_string(t.id) + " uses unknown action '" + t.action->name + "'");
    }
    for (const auto& c : t.constraints) {
      if (!corpus::is_feature_identifier(c.key) || c.allowed.empty()) {
        throw RegistryError("template " + std::to_string(t.id) + " has a malformed constraint on '" + c.key + "'");
      }
    }
  }
}

namespace {

ordered_json template_json(const Template& t) {
  ordered_json j;
  j["id"] = t.id;
  j["text"] = t.text;
  j["frequency"] = t.frequency;
  j["lemmas"] = t.lemmas;
  if (t.action) j["action"] = {{"name", t.action->name}, {"args", t.action->arg_keys}};
  if (!t.constraints.empty()) {
    ordered_json cs = ordered_json::array();
    for (const auto& c : t.constraints) {
      cs.push_back({{"key", c.key}, {"values", std::vector<std::string>(c.allowed.begin(), c.allowed.end())}});
    }
    j["constraints"] = std::move(cs);
  }
  return j;
}

Template template_from(const ordered_json& j) {
  Template t;
  t.id = j.at("id").get<int>();
  t.text = j.at("text").get<std::string>();
  t.frequency = j.value("frequency", std::int64_t{0});
  if (j.contains("lemmas")) t.lemmas = j["lemmas"].get<std::vector<std::string>>();
  if (j.contains("action")) {
    t.action = Action{j["action"].at("name").get<std::string>(),
                      j["action"].value("args", std::vector<std::string>{})};
  }
  for (const auto& c : j.value("constraints", ordered_json::array())) {
    const auto values = c.at("values").get<std::vector<std::string>>();
    t.constraints.push_back({c.at("key").get<std::string>(), {values.begin(), values.end()}});
  }
  return t;
}

}  // namespace

Pool read_pool(std::istream& in, const ActionSet& actions) {
  Pool pool;
  bool header = false;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw RegistryError("pool line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!header) {
      if (j.value("format", std::string()) != "tod-pool") throw RegistryError("missing pool header");
      if (j.value("version", -1) != 1) throw RegistryError("unsupported pool version");
      pool.version = j.value("pool_version", std::uint64_t{1});
      header = true;
      continue;
    }
    try {
      pool.templates.push_back(template_from(j));
    } catch (const nlohmann::json::exception& e) {
      throw RegistryError("pool line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  validate_pool(pool, actions);
  return pool;
}

Pool load_pool(const std::filesystem::path& path, const ActionSet& actions) {
  std::ifstream in(path);
  if (!in) throw RegistryError("cannot open pool file " + path.string());
  return read_pool(in, actions);
}

void write_pool(const Pool& pool, std::ostream& out) {
  ordered_json header = {{"format", "tod-pool"}, {"version", 1}, {"pool_version", pool.version}};
  out << header.dump() << '\n';
  for (const auto& t : pool.templates) out << template_json(t).dump() << '\n';
}

void save_pool(const Pool& pool, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RegistryError("cannot write pool file " + path.string());
  write_pool(pool, out);
}

Pool pool_from_mined(const std::vector<miner::MinedTemplate>& mined) {
  Pool pool;
  for (std::size_t i = 0; i < mined.size(); ++i) {
    pool.templates.push_back({int(i), mined[i].text, mined[i].frequency, mined[i].lemmas, std::nullopt, {}});
  }
  return pool;
}

Pool pool_from_gold(const std::vector<corpus::GoldTemplate>& bank) {
  Pool pool;
  for (const auto& g : bank) {
    Template t;
    t.id = g.id;
    t.text = g.text;
    t.lemmas = miner::content_lemmas(g.text);
    for (const auto& [key, values] : g.constraints) t.constraints.push_back({key, {values.begin(), values.end()}});
    pool.templates.push_back(std::move(t));
  }
  validate_pool(pool);
  return pool;
}

bool is_eligible(const Template& t, const corpus::FeatureMap& features) {
  for (const auto& c : t.constraints) {
    const auto v = features.get(c.key);
    if (!v || c.allowed.find(std::string(*v)) == c.allowed.end()) return false;
  }
  return true;
}

std::vector<std::size_t> eligible_indices(const Pool& pool, const corpus::FeatureMap& features) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pool.templates.size(); ++i)
    if (is_eligible(pool.templates[i], features)) out.push_back(i);
  return out;
}

std::vector<Template> filter_eligible(const Pool& pool, const corpus::FeatureMap& features) {
  std::vector<Template> out;
  for (const auto& t : pool.templates)
    if (is_eligible(t, features)) out.push_back(t);
  return out;
}

Pool attach_decoration(const Pool& pool, int template_id, const std::optional<Action>& action,
                       const std::optional<std::vector<Constraint>>& constraints, const ActionSet& actions) {
  if (action && !actions.contains(action->name)) throw RegistryError("unknown action '" + action->name + "'");
  Pool next = pool;
  auto it = std::find_if(next.templates.begin(), next.templates.end(),
                         [&](const Template& t) { return t.id == template_id; });
  if (it == next.templates.end()) throw RegistryError("no template with id " + std::to_string(template_id));
  if (action) it->action = action;
  if (constraints) it->constraints = *constraints;
  validate_pool(next, actions);
  ++next.version;
  return next;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, sep);) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

}  // namespace

Constraint parse_constraint(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw RegistryError("constraint must look like key=v1,v2: " + spec);
  Constraint c;
  c.key = spec.substr(0, eq);
  for (auto& v : split(spec.substr(eq + 1), ',')) c.allowed.insert(std::move(v));
  if (!corpus::is_feature_identifier(c.key) || c.allowed.empty()) {
    throw RegistryError("malformed constraint: " + spec);
  }
  return c;
}

Action parse_action(const std::string& spec) {
  const auto colon = spec.find(':');
  Action a;
  a.name = spec.substr(0, colon);
  if (a.name.empty()) throw RegistryError("action must look like name:arg1,arg2: " + spec);
  if (colon != std::string::npos) a.arg_keys = split(spec.substr(colon + 1), ',');
  return a;
}

std::string idempotency_token(const std::string& session_id, int turn_index) {
  return session_id + "#" + std::to_string(turn_index);
}

RecordingActionClient::RecordingActionClient(std::filesystem::path log_path) : log_path_(std::move(log_path)) {}

bool RecordingActionClient::dispatch(const ActionInvocation& invocation) {
  std::lock_guard lock(mutex_);
  if (!tokens_.insert(invocation.idempotency_token).second) return false;
  entries_.push_back(invocation);
  if (log_path_) {
    std::ofstream out(*log_path_, std::ios::app);
    if (!out) throw RegistryError("cannot append to action log " + log_path_->string());
    ordered_json j = {{"token", invocation.idempotency_token}, {"action", invocation.action}};
    j["args"] = invocation.args;
    out << j.dump() << '\n';
  }
  return true;
}

std::vector<ActionInvocation> RecordingActionClient::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

TriggerResult trigger_action(const Template& t, const corpus::FeatureMap& features,
                             const std::map<std::string, std::string>& metadata, const std::string& session_id,
                             int turn_index, ActionClient& client) {
  if (!t.action) return {};
  ActionInvocation inv;
  inv.action = t.action->name;
  inv.idempotency_token = idempotency_token(session_id, turn_index);
  for (const auto& key : t.action->arg_keys) {
    if (auto v = features.get(key)) {
      inv.args[key] = std::string(*v);
    } else if (auto it = metadata.find(key); it != metadata.end()) {
      inv.args[key] = it->second;
    } else {
      throw RegistryError("action '" + inv.action + "' argument '" + key + "' is not resolvable");
    }
  }
  if (!client.dispatch(inv)) {
    spdlog::warn("action token {} already dispatched; ignoring", inv.idempotency_token);
    return {TriggerStatus::kDuplicate, std::move(inv)};
  }
  return {TriggerStatus::kDispatched, std::move(inv)};
}

}  // namespace tod::registry
