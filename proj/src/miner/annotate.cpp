#include "tod/miner/annotate.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

namespace tod::miner {
namespace {

const std::vector<std::string> kKeywords = {
    "a-to-z", "accept", "access", "account", "action", "address", "allow", "alternative", "amount",
    "apologize", "apology", "apply", "arrange", "arrive", "assistance", "associate",
    "authorization", "availability", "balance", "bank", "billing", "birth", "book", "box",
    "business", "call", "cancel", "card", "carrier", "center", "certificate", "charge", "check",
    "checking", "claim", "click", "code", "come", "compensation", "complaint", "complete",
    "concern", "condition", "confirm", "confirmation", "contact", "correspondence", "cost",
    "create", "credit", "cvc", "damage", "delay", "deliver", "delivery", "department", "detail",
    "device", "digit", "disarm", "discount", "display", "dispose", "disregard", "donate", "drop",
    "dropoff", "e-mail", "elaborate", "email", "error", "escalate", "exception", "exchange",
    "expedite", "experience", "expire", "extend", "fee", "feedback", "find", "follow", "fulfil",
    "fulfillment", "fund", "gift", "guarantee", "help", "hold", "id", "ignore", "inconvenience",
    "inform", "information", "initiate", "inventory", "investigate", "investigation", "issue",
    "item", "label", "leadership", "link", "locker", "mail", "mailing", "manufacturer", "member",
    "method", "money", "name", "notification", "number", "option", "order", "pack", "package",
    "packaging", "party", "patience", "pay", "payment", "perfect", "phone", "photo", "pick",
    "pickup", "picture", "place", "policy", "post", "prefer", "price", "print", "priority",
    "problem", "proceed", "process", "product", "promo", "promotion", "provide", "purchase", "qr",
    "quantity", "re-order", "reason", "receipt", "receive", "refer", "reflect", "refund", "regard",
    "register", "reimbursement", "reorder", "repeat", "replace", "replacement", "representative",
    "request", "require", "research", "resolution", "resolve", "responsibility", "restock",
    "restocking", "resubmit", "retrocharge", "return", "returnable", "review", "safety", "scan",
    "screenshot", "security", "sell", "seller", "sender", "service", "ship", "shipment", "shipping",
    "solution", "specialist", "status", "stay", "stock", "store", "subscription", "suggest",
    "supervisor", "support", "team", "time", "track", "tracking", "transaction", "transfer",
    "transit", "understand", "understanding", "update", "ups", "url", "use", "verify", "visa",
    "wait", "waive", "warehouse", "warranty", "website", "window",
};

const std::unordered_set<std::string> kFunctionWords = {
    // auxiliaries and modals
    "be", "am", "is", "are", "was", "were", "been", "being", "have", "has", "had", "having", "do",
    "does", "did", "doing", "done", "will", "would", "shall", "should", "can", "could", "may",
    "might", "must",
    // pronouns
    "i", "me", "my", "mine", "myself", "you", "your", "yours", "yourself", "yourselves", "he", "him",
    "his", "she", "her", "hers", "it", "its", "itself", "we", "us", "our", "ours", "ourselves",
    "they", "them", "their", "theirs", "themselves", "this", "that", "these", "those", "who", "whom",
    "whose", "which", "what", "whatever", "someone", "somebody", "something", "anyone", "anybody",
    "anything", "everyone", "everybody", "everything", "nothing", "nobody", "none", "one",
    // determiners
    "a", "an", "the", "some", "any", "no", "every", "each", "either", "neither", "all", "both",
    "few", "many", "much", "more", "most", "several", "such", "another", "other", "own",
    // prepositions
    "about", "above", "across", "after", "against", "along", "among", "around", "as", "at",
    "before", "behind", "below", "beside", "between", "beyond", "by", "down", "during", "except",
    "for", "from", "in", "inside", "into", "like", "near", "of", "off", "on", "onto", "out",
    "outside", "over", "per", "since", "through", "till", "to", "toward", "towards", "under",
    "until", "up", "upon", "via", "with", "within", "without",
    // conjunctions, wh-adverbs, particles
    "and", "but", "or", "nor", "so", "yet", "because", "although", "though", "if", "unless",
    "whether", "while", "than", "then", "when", "where", "why", "how", "not", "there", "here",
    // interjections
    "hi", "hello", "hey", "ok", "okay", "yes", "yeah", "yep", "oh", "um", "uh", "ah", "please",
    "bye", "goodbye",
    // numerals
    "zero", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve", "twenty", "thirty", "hundred", "thousand"};

const std::unordered_map<std::string, std::string> kIrregular = {
    {"sent", "send"},       {"got", "get"},         {"gotten", "get"},      {"gave", "give"},
    {"given", "give"},      {"took", "take"},       {"taken", "take"},      {"made", "make"},
    {"paid", "pay"},        {"bought", "buy"},      {"went", "go"},         {"gone", "go"},
    {"came", "come"},       {"found", "find"},      {"left", "leave"},      {"told", "tell"},
    {"said", "say"},        {"thought", "think"},   {"held", "hold"},       {"sold", "sell"},
    {"kept", "keep"},       {"brought", "bring"},   {"chose", "choose"},    {"chosen", "choose"},
    {"wrote", "write"},     {"written", "write"},   {"knew", "know"},       {"known", "know"},
    {"saw", "see"},         {"seen", "see"},        {"broke", "break"},     {"broken", "break"},
    {"spoke", "speak"},     {"spoken", "speak"},    {"understood", "understand"},
    {"lost", "lose"},       {"felt", "feel"},       {"meant", "mean"},      {"heard", "hear"},
    {"ran", "run"},         {"began", "begin"},     {"begun", "begin"},     {"fell", "fall"},
    {"fallen", "fall"},     {"built", "build"},     {"spent", "spend"},     {"shipped", "ship"},
    {"children", "child"},  {"men", "man"},         {"women", "woman"},     {"feet", "foot"},
    {"better", "good"},     {"best", "good"},       {"worse", "bad"},       {"worst", "bad"},
    {"thanks", "thank"},    {"apologies", "apology"}};

const std::vector<std::string> kVerbs = {
    "accept", "access", "add", "allow", "answer", "apologize", "appear", "apply", "appreciate",
    "approve", "arrange", "arrive", "ask", "assist", "book", "break", "bring", "buy", "call",
    "cancel", "change", "charge", "check", "choose", "click", "close", "come", "complete",
    "confirm", "contact", "continue", "cover", "create", "credit", "damage", "deliver", "disarm",
    "display", "dispose", "disregard", "donate", "drop", "elaborate", "email", "enjoy", "escalate",
    "exchange", "expedite", "expire", "explain", "extend", "file", "find", "fix", "follow", "fulfil",
    "get", "give", "go", "happen", "hear", "help", "hold", "hope", "ignore", "include", "inform",
    "initiate", "investigate", "issue", "keep", "know", "leave", "let", "lift", "look", "lose",
    "mail", "make", "match", "mean", "need", "notice", "offer", "open", "order", "pack", "pay",
    "pick", "place", "post", "prefer", "print", "proceed", "process", "provide", "purchase", "reach",
    "receive", "recommend", "redeem", "refer", "reflect", "refund", "register", "reorder", "re-order",
    "repair", "repeat", "replace", "request", "require", "research", "resolve", "restock",
    "resubmit", "return", "reverse", "review", "run", "save", "say", "scan", "see", "sell", "send",
    "share", "ship", "show", "speak", "start", "stay", "stop", "submit", "suggest", "swap", "take",
    "tell", "thank", "think", "track", "transfer", "try", "turn", "understand", "update", "use",
    "verify", "wait", "waive", "want", "work", "write"};

const std::vector<std::string> kAdjectives = {
    "able", "active", "additional", "annual", "automatic", "available", "bad", "big", "blue",
    "broken", "correct", "current", "damaged", "different", "duplicate", "electronic", "eligible",
    "express", "extra", "final", "first", "free", "full", "glad", "good", "great", "happy", "last",
    "late", "local", "lovely", "new", "next", "nice", "original", "partial", "perfect", "possible",
    "prepaid", "ready", "right", "same", "second", "special", "sorry", "standard", "sure", "wrong",
    "whole", "wireless"};

const std::vector<std::string> kAdverbs = {
    "again", "already", "also", "always", "automatically", "currently", "immediately", "just",
    "never", "now", "often", "quickly", "really", "shortly", "soon", "still", "today", "tomorrow",
    "too", "unfortunately", "usually", "very", "yesterday"};

const std::vector<std::string> kNouns = {
    "accessory", "bag", "birthday", "blender", "bookshelf", "cable", "case", "center", "coffee",
    "customer", "date", "day", "desk", "glass", "hour", "jacket", "kitchen", "lamp", "maker",
    "member", "membership", "message", "minute", "month", "news", "renewal", "request", "shoe",
    "size", "statement", "text", "vase", "wallet", "week", "weekend", "year", "app", "business",
    "headphone", "schedule", "trace", "chance", "day", "cost", "voucher", "invoice", "locker"};

struct Lexicon {
  std::unordered_map<std::string, Pos> pos;

  Lexicon() {
    for (const auto& w : kKeywords) pos.emplace(w, Pos::kNoun);
    for (const auto& w : kNouns) pos.emplace(w, Pos::kNoun);
    for (const auto& w : kAdverbs) pos[w] = Pos::kAdverb;
    for (const auto& w : kAdjectives) pos[w] = Pos::kAdjective;
    for (const auto& w : kVerbs) pos[w] = Pos::kVerb;
  }
  bool known(const std::string& w) const { return pos.count(w) > 0; }
};

const Lexicon& lexicon() {
  static const Lexicon lex;
  return lex;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

bool is_word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         static_cast<unsigned char>(c) >= 128;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// Stem candidates for an inflected form, most specific first.
std::vector<std::string> candidates(const std::string& w) {
  std::vector<std::string> out;
  auto stem = [&](std::size_t cut) { return w.substr(0, w.size() - cut); };
  auto undouble = [](const std::string& s) {
    if (s.size() >= 3 && s[s.size() - 1] == s[s.size() - 2] && !is_vowel(s.back())) {
      return s.substr(0, s.size() - 1);
    }
    return std::string();
  };
  if (ends_with(w, "ies") || ends_with(w, "ied")) out.push_back(stem(3) + "y");
  for (const char* s : {"sses", "shes", "ches", "xes", "zes", "oes"}) {
    if (ends_with(w, s)) out.push_back(stem(2));
  }
  if (ends_with(w, "es")) out.push_back(stem(1));
  if (ends_with(w, "s") && !ends_with(w, "ss")) out.push_back(stem(1));
  if (ends_with(w, "ing") && w.size() > 4) {
    out.push_back(stem(3));
    out.push_back(stem(3) + "e");
    if (auto u = undouble(stem(3)); !u.empty()) out.push_back(u);
  }
  if (ends_with(w, "ed") && w.size() > 3) {
    out.push_back(stem(2));
    out.push_back(stem(1));
    if (auto u = undouble(stem(2)); !u.empty()) out.push_back(u);
  }
  return out;
}

}  // namespace

std::string_view to_string(Pos pos) {
  switch (pos) {
    case Pos::kNoun: return "noun";
    case Pos::kVerb: return "verb";
    case Pos::kAdjective: return "adjective";
    case Pos::kAdverb: return "adverb";
    case Pos::kFunction: return "function";
  }
  return "function";
}

bool is_content(Pos pos) { return pos != Pos::kFunction; }

const std::vector<std::string>& default_keywords() { return kKeywords; }

std::string lemmatize(std::string_view word) {
  std::string w(word);
  for (auto& c : w) c = char(std::tolower(static_cast<unsigned char>(c)));
  if (auto it = kIrregular.find(w); it != kIrregular.end()) return it->second;
  const auto& lex = lexicon();
  if (lex.known(w)) return w;
  for (const auto& c : candidates(w)) {
    if (lex.known(c)) return c;
  }
  if (ends_with(w, "ies") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
  if (ends_with(w, "s") && w.size() > 3 && !ends_with(w, "ss") && !ends_with(w, "us") && !ends_with(w, "is")) {
    return w.substr(0, w.size() - 1);
  }
  return w;
}

Pos guess_pos(std::string_view lemma, std::string_view surface) {
  if (kFunctionWords.count(std::string(surface)) || kFunctionWords.count(std::string(lemma))) {
    return Pos::kFunction;
  }
  if (all_digits(surface)) return Pos::kFunction;
  const auto& lex = lexicon();
  if (auto it = lex.pos.find(std::string(lemma)); it != lex.pos.end()) return it->second;
  if (ends_with(surface, "ly")) return Pos::kAdverb;
  if (ends_with(surface, "ing") || ends_with(surface, "ed")) return Pos::kVerb;
  for (const char* s : {"ous", "ful", "able", "ible", "al", "ive", "less", "ic"}) {
    if (ends_with(surface, s)) return Pos::kAdjective;
  }
  return Pos::kNoun;
}

std::vector<AnnotatedToken> annotate(std::string_view sentence) {
  // Split into lowercase words; apostrophes and hyphens stay inside words.
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    while (!cur.empty() && (cur.back() == '-' || cur.back() == '\'')) cur.pop_back();
    if (!cur.empty()) words.push_back(cur);
    cur.clear();
  };
  for (char ch : sentence) {
    if (is_word_char(ch)) {
      cur.push_back(char(std::tolower(static_cast<unsigned char>(ch))));
    } else if ((ch == '\'' || ch == '-') && !cur.empty()) {
      cur.push_back(ch);
    } else {
      flush();
    }
  }
  flush();

  std::vector<AnnotatedToken> out;
  auto emit = [&](const std::string& surface) {
    if (surface.empty()) return;
    AnnotatedToken t;
    t.surface = surface;
    t.lemma = kFunctionWords.count(surface) ? surface : lemmatize(surface);
    t.pos = guess_pos(t.lemma, surface);
    out.push_back(std::move(t));
  };
  for (const auto& w : words) {
    const auto apos = w.find('\'');
    if (apos == std::string::npos) {
      emit(w);
      continue;
    }
    const std::string head = w.substr(0, apos);
    const std::string tail = w.substr(apos);
    if (w == "won't") {
      emit("will");
      emit("not");
    } else if (w == "can't") {
      emit("can");
      emit("not");
    } else if (w == "shan't") {
      emit("shall");
      emit("not");
    } else if (ends_with(head, "n") && tail == "'t") {
      emit(head.substr(0, head.size() - 1));
      emit("not");
    } else {
      emit(head);
      static const std::unordered_map<std::string, std::string> kClitics = {
          {"'ll", "will"}, {"'re", "are"}, {"'m", "am"}, {"'ve", "have"}, {"'d", "would"}, {"'s", "is"}};
      if (auto it = kClitics.find(tail); it != kClitics.end()) emit(it->second);
    }
  }
  return out;
}

std::vector<std::string> content_lemmas(std::string_view sentence) {
  std::vector<std::string> out;
  for (auto& t : annotate(sentence)) {
    if (is_content(t.pos)) out.push_back(std::move(t.lemma));
  }
  return out;
}

}  // namespace tod::miner
