#pragma once

#include "tod/corpus/synthetic.hpp"
#include "tod/corpus/types.hpp"
#include "tod/miner/miner.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace tod::registry {

class RegistryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Constraint {
  std::string key;
  std::set<std::string> allowed;

  bool operator==(const Constraint&) const = default;
};

struct Action {
  std::string name;
  std::vector<std::string> arg_keys;

  bool operator==(const Action&) const = default;
};

struct Template {
  int id = 0;
  std::string text;
  std::int64_t frequency = 0;
  std::vector<std::string> lemmas;
  std::optional<Action> action;
  std::vector<Constraint> constraints;

  bool operator==(const Template&) const = default;
};

// Actions a template may carry. Unknown names are rejected on load and on
// decoration.
class ActionSet {
 public:
  ActionSet();  // the built-in desk actions
  explicit ActionSet(std::set<std::string> names) : names_(std::move(names)) {}

  bool contains(const std::string& name) const { return names_.count(name) > 0; }
  void add(const std::string& name) { names_.insert(name); }
  const std::set<std::string>& names() const { return names_; }

 private:
  std::set<std::string> names_;
};

struct Pool {
  std::vector<Template> templates;
  std::uint64_t version = 1;

  const Template* find(int id) const;
  std::vector<std::string> texts() const;
};

// Throws RegistryError on duplicate ids, empty text, bad constraint keys or
// unknown actions.
void validate_pool(const Pool& pool, const ActionSet& actions = {});

// Line-delimited JSON with a {"format":"tod-pool","version":1} header line.
Pool load_pool(const std::filesystem::path& path, const ActionSet& actions = {});
void save_pool(const Pool& pool, const std::filesystem::path& path);
Pool read_pool(std::istream& in, const ActionSet& actions = {});
void write_pool(const Pool& pool, std::ostream& out);

// Ids follow admission order starting at 0.
Pool pool_from_mined(const std::vector<miner::MinedTemplate>& mined);
// Keeps generator ids and turns their constraints into pool constraints.
Pool pool_from_gold(const std::vector<corpus::GoldTemplate>& bank);

// Conjunctive over constraints, disjunctive within a value set; a missing
// feature key fails closed.
bool is_eligible(const Template& t, const corpus::FeatureMap& features);
std::vector<std::size_t> eligible_indices(const Pool& pool, const corpus::FeatureMap& features);
std::vector<Template> filter_eligible(const Pool& pool, const corpus::FeatureMap& features);

// Returns a new pool with the decoration replaced and the version bumped.
// Leaves action/constraints unchanged when the corresponding argument is
// nullopt.
Pool attach_decoration(const Pool& pool, int template_id, const std::optional<Action>& action,
                       const std::optional<std::vector<Constraint>>& constraints, const ActionSet& actions = {});

// "key=v1,v2" and "name:arg1,arg2".
Constraint parse_constraint(const std::string& spec);
Action parse_action(const std::string& spec);

struct ActionInvocation {
  std::string action;
  std::map<std::string, std::string> args;
  std::string idempotency_token;

  bool operator==(const ActionInvocation&) const = default;
};

std::string idempotency_token(const std::string& session_id, int turn_index);

class ActionClient {
 public:
  virtual ~ActionClient() = default;
  // False when the token was already dispatched.
  virtual bool dispatch(const ActionInvocation& invocation) = 0;
};

// Appends every new invocation to memory and, when a path is given, to a
// line-delimited log file.
class RecordingActionClient : public ActionClient {
 public:
  RecordingActionClient() = default;
  explicit RecordingActionClient(std::filesystem::path log_path);

  bool dispatch(const ActionInvocation& invocation) override;
  std::vector<ActionInvocation> entries() const;

 private:
  mutable std::mutex mutex_;
  std::optional<std::filesystem::path> log_path_;
  std::set<std::string> tokens_;
  std::vector<ActionInvocation> entries_;
};

enum class TriggerStatus { kNoAction, kDispatched, kDuplicate };

struct TriggerResult {
  TriggerStatus status = TriggerStatus::kNoAction;
  std::optional<ActionInvocation> invocation;
};

// Arguments resolve from features first, then request metadata. Throws
// RegistryError when a key resolves from neither.
TriggerResult trigger_action(const Template& t, const corpus::FeatureMap& features,
                             const std::map<std::string, std::string>& metadata, const std::string& session_id,
                             int turn_index, ActionClient& client);

}  // namespace tod::registry
