#include "tod/corpus/synthetic.hpp"

#include <algorithm>

namespace tod::corpus {
namespace {

struct Gate {
  std::string key;
  std::vector<std::string> yes;  // values for which the gate holds
};

struct IntentSketch {
  std::string name;
  std::vector<std::string> openings;
  std::vector<std::string> lines;  // ten agent templates, see desk_config
  Gate a;
  Gate b;  // empty key: no options step
};

const std::vector<FeatureSpec>& desk_features() {
  static const std::vector<FeatureSpec> features = {
      {"card_status", {"active", "redeemed"}, {}},
      {"delivery_status", {"in_transit", "lost"}, {}},
      {"in_stock", {"yes", "no"}, {}},
      {"item_category", {"electronics", "apparel", "home"}, {}},
      {"payment_method", {"card", "gift_card"}, {}},
      {"prime_member", {"yes", "no"}, {}},
      {"refund_eligible", {"yes", "no"}, {}},
      {"shipped", {"yes", "no"}, {}},
      {"warranty", {"active", "expired"}, {}},
  };
  return features;
}

std::vector<std::string> complement(const Gate& g) {
  for (const auto& f : desk_features()) {
    if (f.key != g.key) continue;
    std::vector<std::string> out;
    for (const auto& v : f.values)
      if (std::find(g.yes.begin(), g.yes.end(), v) == g.yes.end()) out.push_back(v);
    return out;
  }
  return {};
}

const std::vector<IntentSketch>& sketches() {
  static const std::vector<IntentSketch> all = {
      {"start_return",
       {"i want to return something i bought", "hi, how do i send an item back?", "i need to start a return"},
       {"Could you share the order number for the item you want to return?",
        "I see the wireless headphones on that order, is that the item you want to return?",
        "Which item from that order would you like to send back?",
        "Good news, this item is eligible for a full refund once we receive it.",
        "I am sorry, this item is past the return window and is not eligible for a refund.",
        "Since this is an electronic item, please include all cables and accessories in the box.",
        "You can drop the package at any carrier location in its original packaging.",
        "I have emailed you a prepaid return label for this order.",
        "Is there anything else I can help you with regarding your return?",
        "Thank you for contacting us, have a great day!"},
       {"refund_eligible", {"yes"}},
       {"item_category", {"electronics"}}},
      {"refund_status",
       {"where is my refund?", "i have not received my refund yet", "can you check on my refund please"},
       {"Can you give me the order number so I can look up the refund?",
        "I found a refund request for the blue jacket, is that the one you are asking about?",
        "Which item was the refund for?",
        "The refund has been approved and is being processed now.",
        "This order was not eligible for a refund, so no refund was issued.",
        "Refunds to a credit card usually appear within three to five business days.",
        "Refunds to a gift card balance show up within a few hours.",
        "I have sent the refund confirmation to your email address.",
        "Is there anything else I can help with on this refund?",
        "Thanks for reaching out, take care!"},
       {"refund_eligible", {"yes"}},
       {"payment_method", {"card"}}},
      {"exchange_item",
       {"i would like to exchange an item", "can i swap this for a different size?", "i need an exchange"},
       {"Please tell me the order number of the item you want to exchange.",
        "Is it the running shoes from that order that you want to exchange?",
        "Which item would you like to exchange?",
        "The replacement you want is in stock and can ship right away.",
        "Unfortunately the replacement is currently out of stock.",
        "As a member, your replacement will ship with free express delivery.",
        "Your replacement will ship with standard delivery at no extra cost.",
        "I have created the exchange and your replacement order is confirmed.",
        "Can I help you with anything else about this exchange?",
        "Thank you for your patience, enjoy the rest of your day!"},
       {"in_stock", {"yes"}},
       {"prime_member", {"yes"}}},
      {"cancel_order",
       {"please cancel my order", "i want to cancel something i ordered", "how can i cancel an order?"},
       {"What is the order number you would like to cancel?",
        "I see the coffee maker on that order, should I cancel that one?",
        "Which item on the order should be cancelled?",
        "The order has not shipped yet, so I can cancel it for you.",
        "The order has already shipped, so it cannot be cancelled now.",
        "The charge on your card will be reversed within two days.",
        "The amount will be returned to your gift card balance.",
        "I have cancelled the order and you will get a confirmation email shortly.",
        "Is there anything else you would like me to cancel or check?",
        "Thanks for letting us know, goodbye!"},
       {"shipped", {"no"}},
       {"payment_method", {"card"}}},
      {"track_package",
       {"where is my package?", "my order has not arrived", "can you track my delivery"},
       {"Could you provide the order number so I can track the package?",
        "Is this about the desk lamp that shipped last week?",
        "Which package are you trying to track?",
        "Your package is in transit and on schedule.",
        "It looks like the package was lost by the carrier.",
        "As a member you will receive a delivery date update by text message.",
        "You can follow the tracking link in your shipping email for updates.",
        "I have opened a carrier trace for your package.",
        "Is there anything else I can check about your delivery?",
        "Thank you for your time, have a nice day!"},
       {"delivery_status", {"in_transit"}},
       {"prime_member", {"yes"}}},
      {"change_address",
       {"i need to change my delivery address", "can i update the shipping address?", "wrong address on my order"},
       {"Which order number should I update the address for?",
        "Is this for the bookshelf order placed yesterday?",
        "Which order do you want to send to the new address?",
        "The order has not shipped, so I can still change the address.",
        "The order has already left our warehouse, so the address cannot be changed.",
        "Your member delivery promise will still apply to the new address.",
        "Delivery to the new address may take one extra day.",
        "I have updated the shipping address on your order.",
        "Anything else I can update on your account today?",
        "Thank you for contacting us, bye for now!"},
       {"shipped", {"no"}},
       {"prime_member", {"yes"}}},
      {"damaged_item",
       {"my item arrived broken", "the product i received is damaged", "i got a damaged item"},
       {"I am sorry to hear that, what is the order number?",
        "Is the damaged item the glass vase from that order?",
        "Which item arrived damaged?",
        "Your item is still under warranty, so we will cover the damage.",
        "The warranty on this item has expired, so we cannot replace it for free.",
        "For electronic items we also offer a free repair at a service center.",
        "Please keep the damaged item until the claim is complete.",
        "I have filed a damage claim and a replacement is on the way.",
        "Is there anything else I can help with about the damaged item?",
        "We appreciate your patience, have a good day!"},
       {"warranty", {"active"}},
       {"item_category", {"electronics"}}},
      {"payment_issue",
       {"i was charged twice", "there is a problem with my payment", "my payment did not go through"},
       {"Can you tell me the order number with the payment problem?",
        "Do you mean the charge for the kitchen blender?",
        "Which charge on your statement looks wrong?",
        "I can see the duplicate charge on your credit card.",
        "The order was paid with a gift card, so I will check the gift card balance.",
        "Members get the duplicate amount credited back immediately.",
        "The duplicate amount will be returned within five business days.",
        "I have reversed the extra charge on your account.",
        "Is there any other payment question I can answer?",
        "Thanks for your patience, goodbye!"},
       {"payment_method", {"card"}},
       {"prime_member", {"yes"}}},
      {"gift_card",
       {"my gift card is not working", "i have a question about a gift card", "gift card balance problem"},
       {"Please share the gift card order number.",
        "Is this the gift card you received for your birthday?",
        "Which gift card are you asking about?",
        "The gift card is active and ready to use.",
        "This gift card has already been redeemed on another account.",
        "You can add the gift card balance to your wallet in the app.",
        "Gift card balances cannot be transferred between accounts.",
        "I have applied the gift card balance to your account.",
        "Is there anything else I can do for you today?",
        "Thanks for reaching out about your gift card, take care!"},
       {"card_status", {"active"}},
       {"", {}}},
      {"subscription",
       {"i want to cancel my membership", "question about my subscription", "how do i stop my membership renewal"},
       {"Could you confirm the order number tied to your membership?",
        "Is this about the annual membership that renews next month?",
        "Which subscription do you want to change?",
        "Your membership is active and renews automatically.",
        "You do not have an active membership on this account.",
        "The renewal is charged to the card on file.",
        "The renewal will use your gift card balance first.",
        "I have turned off automatic renewal for your membership.",
        "Is there anything else about your membership I can help with?",
        "Thank you for being with us, have a lovely day!"},
       {"prime_member", {"yes"}},
       {"payment_method", {"card"}}},
  };
  return all;
}

const std::vector<std::string> kNumberReplies = {"it is {num}", "my order number is {num}", "{num}",
                                                 "sure, it's {num}", "the number is {num}"};
const std::vector<std::string> kYes = {"yes", "yes, that one", "that's right", "correct"};
const std::vector<std::string> kNo = {"no, a different one", "no", "not that one"};
const std::vector<std::string> kItemReplies = {"the one from last week", "the second item on the order",
                                               "the bigger one", "the one i ordered first"};
const std::vector<std::string> kAckGood = {"great", "perfect, thanks", "ok, good to know", "that works"};
const std::vector<std::string> kAckBad = {"oh, that's too bad", "hmm okay", "i see", "that is disappointing"};
const std::vector<std::string> kThanks = {"thank you", "thanks a lot", "awesome, thanks"};
const std::vector<std::string> kDone = {"no, that is all", "nothing else, thanks", "that's everything"};

}  // namespace

SyntheticConfig desk_config(int dialogues) {
  SyntheticConfig c;
  c.dialogues = dialogues;
  c.features = desk_features();
  int next = 0;
  for (const auto& s : sketches()) {
    const int base = next;
    next += 10;
    for (int i = 0; i < 10; ++i) {
      GoldTemplate t{base + i, s.lines[std::size_t(i)], {}};
      if (i == 3 || i == 7) t.constraints[s.a.key] = s.a.yes;
      if (i == 4) t.constraints[s.a.key] = complement(s.a);
      if (!s.b.key.empty() && i == 5) t.constraints[s.b.key] = s.b.yes;
      if (!s.b.key.empty() && i == 6) t.constraints[s.b.key] = complement(s.b);
      c.templates.push_back(std::move(t));
    }

    IntentFlow f;
    f.name = s.name;
    f.openings = s.openings;
    f.start = "ask";
    const Condition a_yes{{s.a.key, s.a.yes}};
    const Condition a_no{{s.a.key, complement(s.a)}};
    f.states.push_back({"ask", {{{}, base + 0}}, {{{}, kNumberReplies, "confirm", 1.0}}, false});
    f.states.push_back({"confirm", {{{}, base + 1}},
                        {{{}, kYes, "policy", 0.75}, {{}, kNo, "which", 0.25}}, false});
    f.states.push_back({"which", {{{}, base + 2}}, {{{}, kItemReplies, "policy", 1.0}}, false});
    const std::string after_yes = s.b.key.empty() ? "action" : "options";
    f.states.push_back({"policy",
                        {{a_yes, base + 3}, {{}, base + 4}},
                        {{a_yes, kAckGood, after_yes, 1.0}, {a_no, kAckBad, "else", 1.0}},
                        false});
    if (!s.b.key.empty()) {
      f.states.push_back({"options",
                          {{Condition{{s.b.key, s.b.yes}}, base + 5}, {{}, base + 6}},
                          {{{}, kAckGood, "action", 1.0}},
                          false});
    }
    f.states.push_back({"action", {{{}, base + 7}}, {{{}, kThanks, "else", 1.0}}, false});
    f.states.push_back({"else", {{{}, base + 8}}, {{{}, kDone, "close", 1.0}}, false});
    f.states.push_back({"close", {{{}, base + 9}}, {}, true});
    c.intents.push_back(std::move(f));
  }
  c.validate();
  return c;
}

SyntheticConfig coverage_config(int dialogues, int bank_size, double zipf) {
  SyntheticConfig c;
  c.dialogues = dialogues;
  c.noise = {0.2, 0.0};
  c.generated_bank = {bank_size, zipf, 7};
  IntentFlow f;
  f.name = "general";
  f.openings = {"hello", "hi there", "i have a question", "can you help me"};
  f.free_form = true;
  f.min_free_turns = 4;
  f.max_free_turns = 10;
  c.intents.push_back(std::move(f));
  c.validate();
  return c;
}

}  // namespace tod::corpus
