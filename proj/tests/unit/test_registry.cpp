#include "tod/registry/registry.hpp"

#include <doctest.h>

#include <filesystem>
#include <sstream>

using namespace tod;
using namespace tod::registry;

namespace {

Pool sample_pool() {
  Pool p;
  p.templates = {
      {1, "Your refund is on its way.", 10, {}, Action{"issue_refund", {"payment_method"}}, {}},
      {2, "As a Prime member you get free returns.", 5, {}, std::nullopt, {{"prime_member", {"yes"}}}},
      {3, "We can ship a replacement.", 4, {}, std::nullopt,
       {{"in_stock", {"yes"}}, {"item_category", {"books", "toys"}}}},
  };
  return p;
}

}  // namespace

TEST_SUITE("registry") {

TEST_CASE("eligibility is conjunctive across keys and fails closed") {
  const auto pool = sample_pool();
  corpus::FeatureMap f{{"prime_member", "yes"}, {"in_stock", "yes"}, {"item_category", "toys"}};
  CHECK(eligible_indices(pool, f) == std::vector<std::size_t>{0, 1, 2});
  f.set("item_category", "garden");
  CHECK(eligible_indices(pool, f) == std::vector<std::size_t>{0, 1});
  CHECK(eligible_indices(pool, {}) == std::vector<std::size_t>{0});
  CHECK(filter_eligible(pool, {{"prime_member", "no"}}).size() == 1);
}

TEST_CASE("pool files round trip and reject duplicates") {
  const auto pool = sample_pool();
  std::stringstream ss;
  write_pool(pool, ss);
  const auto back = read_pool(ss);
  CHECK(back.templates == pool.templates);
  CHECK(back.version == pool.version);

  Pool dup = pool;
  dup.templates.push_back(dup.templates[0]);
  CHECK_THROWS_AS(validate_pool(dup), RegistryError);
  Pool unknown = pool;
  unknown.templates[0].action = Action{"launch_rocket", {}};
  CHECK_THROWS_AS(validate_pool(unknown), RegistryError);
  Pool empty_text = pool;
  empty_text.templates[1].text.clear();
  CHECK_THROWS_AS(validate_pool(empty_text), RegistryError);

  std::stringstream bad("{\"format\":\"something-else\",\"version\":1}\n");
  CHECK_THROWS_AS(read_pool(bad), RegistryError);
}

TEST_CASE("decoration returns a new pool with a bumped version") {
  const auto pool = sample_pool();
  const auto next = attach_decoration(pool, 3, Action{"create_exchange", {"item_category"}},
                                      std::vector<Constraint>{parse_constraint("in_stock=yes")});
  CHECK(next.version == pool.version + 1);
  CHECK(next.find(3)->action->name == "create_exchange");
  CHECK(next.find(3)->constraints.size() == 1);
  CHECK(pool.find(3)->constraints.size() == 2);
  CHECK_THROWS_AS(attach_decoration(pool, 99, std::nullopt, std::nullopt), RegistryError);
  CHECK_THROWS_AS(attach_decoration(pool, 1, Action{"nope", {}}, std::nullopt), RegistryError);
}

TEST_CASE("constraint and action specs parse") {
  const auto c = parse_constraint("item_category=books,toys");
  CHECK(c.key == "item_category");
  CHECK(c.allowed == std::set<std::string>{"books", "toys"});
  const auto a = parse_action("issue_refund:payment_method,order_id");
  CHECK(a.name == "issue_refund");
  CHECK(a.arg_keys == std::vector<std::string>{"payment_method", "order_id"});
  CHECK(parse_action("send_confirmation").arg_keys.empty());
  CHECK_THROWS_AS(parse_constraint("no_equals"), RegistryError);
  CHECK_THROWS_AS(parse_constraint("key="), RegistryError);
}

TEST_CASE("actions resolve arguments and dispatch once per turn") {
  const auto pool = sample_pool();
  RecordingActionClient client;
  const corpus::FeatureMap f{{"payment_method", "card"}};
  const auto first = trigger_action(*pool.find(1), f, {}, "s1", 3, client);
  CHECK(first.status == TriggerStatus::kDispatched);
  REQUIRE(first.invocation);
  CHECK(first.invocation->args.at("payment_method") == "card");
  CHECK(first.invocation->idempotency_token == idempotency_token("s1", 3));
  CHECK(trigger_action(*pool.find(1), f, {}, "s1", 3, client).status == TriggerStatus::kDuplicate);
  CHECK(trigger_action(*pool.find(1), {}, {{"payment_method", "gift"}}, "s1", 4, client).status ==
        TriggerStatus::kDispatched);
  CHECK(trigger_action(*pool.find(2), f, {}, "s1", 5, client).status == TriggerStatus::kNoAction);
  CHECK_THROWS_AS(trigger_action(*pool.find(1), {}, {}, "s1", 6, client), RegistryError);
  CHECK(client.entries().size() == 2);
}

TEST_CASE("gold and mined pools carry ids and constraints") {
  const auto gold = pool_from_gold(corpus::gold_bank(corpus::desk_config(10)));
  validate_pool(gold);
  CHECK(gold.templates.size() == 100);
  std::size_t constrained = 0;
  for (const auto& t : gold.templates) constrained += !t.constraints.empty();
  CHECK(constrained > 0);

  const auto mined = pool_from_mined({{"Hello there.", 4, {"hello"}}, {"Bye now.", 2, {"bye"}}});
  REQUIRE(mined.templates.size() == 2);
  CHECK(mined.templates[0].id != mined.templates[1].id);
  CHECK(mined.templates[1].frequency == 2);
}

}
