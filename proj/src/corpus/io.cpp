#include "tod/corpus/io.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace tod::corpus {

using nlohmann::ordered_json;

namespace {

bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

}  // namespace

void validate_dialogue(const Dialogue& d) {
  if (d.id.empty()) throw CorpusError("dialogue has an empty id");
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    if (blank(d.turns[i].text)) {
      throw CorpusError("dialogue '" + d.id + "' turn " + std::to_string(i) + " has empty text");
    }
  }
  if (d.agent_turn_count() == 0) throw CorpusError("dialogue '" + d.id + "' has no agent turn");
  if (!d.gold_templates.empty() && d.gold_templates.size() != d.turns.size()) {
    throw CorpusError("dialogue '" + d.id + "' gold annotations do not align with turns");
  }
}

std::string dialogue_to_json_line(const Dialogue& d) {
  ordered_json j;
  j["id"] = d.id;
  j["intent"] = d.intent;
  ordered_json profile = ordered_json::object();
  for (const auto& [k, v] : d.profile.entries()) profile[k] = v;
  j["profile"] = std::move(profile);
  ordered_json turns = ordered_json::array();
  for (const auto& t : d.turns) {
    turns.push_back({{"speaker", std::string(to_string(t.speaker))}, {"text", t.text}});
  }
  j["turns"] = std::move(turns);
  if (!d.gold_templates.empty()) j["gold"] = d.gold_templates;
  return j.dump();
}

Dialogue dialogue_from_json_line(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw CorpusError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw CorpusError("record is not an object");
  Dialogue d;
  try {
    d.id = j.at("id").get<std::string>();
    d.intent = j.value("intent", std::string());
    if (j.contains("profile")) {
      for (const auto& [k, v] : j.at("profile").items()) d.profile.set(k, v.get<std::string>());
    }
    for (const auto& t : j.at("turns")) {
      d.turns.push_back({parse_speaker(t.at("speaker").get<std::string>()), t.at("text").get<std::string>()});
    }
    if (j.contains("gold")) d.gold_templates = j.at("gold").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw CorpusError(std::string("bad field: ") + e.what());
  }
  validate_dialogue(d);
  return d;
}

LoadResult read_corpus(std::istream& in, const LoadOptions& options) {
  LoadResult result;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    if (!header_seen) {
      ordered_json h;
      try {
        h = ordered_json::parse(line);
      } catch (const nlohmann::json::parse_error&) {
        throw CorpusError("line 1: missing corpus header");
      }
      if (!h.is_object() || h.value("format", std::string()) != "tod-corpus") {
        throw CorpusError("line " + std::to_string(line_no) + ": missing corpus header");
      }
      const int version = h.value("version", -1);
      if (version != options.schema_version) {
        throw CorpusError("schema version mismatch: file has " + std::to_string(version) +
                          ", expected " + std::to_string(options.schema_version));
      }
      header_seen = true;
      continue;
    }
    try {
      result.dialogues.push_back(dialogue_from_json_line(line));
    } catch (const CorpusError& e) {
      result.diagnostics.push_back({line_no, e.what()});
      if (result.diagnostics.size() > options.max_errors) {
        throw CorpusError("too many malformed records (last at line " + std::to_string(line_no) + ")");
      }
    }
  }
  return result;
}

LoadResult load_corpus(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file " + path.string());
  return read_corpus(in, options);
}

void write_corpus(std::span<const Dialogue> corpus, std::ostream& out) {
  out << R"({"format":"tod-corpus","version":)" << kCorpusSchemaVersion << "}\n";
  for (const auto& d : corpus) out << dialogue_to_json_line(d) << '\n';
}

void save_corpus(std::span<const Dialogue> corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw CorpusError("cannot write corpus file " + path.string());
  write_corpus(corpus, out);
}

}  // namespace tod::corpus
