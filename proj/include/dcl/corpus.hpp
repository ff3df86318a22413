#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dcl/common.hpp"
#include "dcl/text.hpp"

namespace dcl {

using nlohmann::json;

struct Utterance {
  std::string speaker;
  std::string text;
  int index = 1;  // 1-based turn position

  bool operator==(const Utterance&) const = default;
};

enum class QuestionType {
  cause,
  subsequent_event,
  subsequent_event_clipped,
  prerequisite,
  motivation,
  reaction,
};

inline constexpr std::array<QuestionType, 6> kAllQuestionTypes{
    QuestionType::cause,        QuestionType::subsequent_event, QuestionType::subsequent_event_clipped,
    QuestionType::prerequisite, QuestionType::motivation,       QuestionType::reaction};

inline std::string_view to_string(QuestionType q) {
  switch (q) {
    case QuestionType::cause: return "cause";
    case QuestionType::subsequent_event: return "subsequent_event";
    case QuestionType::subsequent_event_clipped: return "subsequent_event_clipped";
    case QuestionType::prerequisite: return "prerequisite";
    case QuestionType::motivation: return "motivation";
    case QuestionType::reaction: return "reaction";
  }
  return "";
}

inline std::string_view question_text(QuestionType q) {
  switch (q) {
    case QuestionType::cause: return "What is or could be the cause of the target utterance?";
    case QuestionType::subsequent_event:
    case QuestionType::subsequent_event_clipped:
      return "What subsequent event happens or could happen following the target?";
    case QuestionType::prerequisite: return "What is or could be the prerequisite of target?";
    case QuestionType::motivation: return "What is or could be the motivation of target?";
    case QuestionType::reaction:
      return "What is the possible emotional reaction of the listener in response to target?";
  }
  return "";
}

inline std::optional<QuestionType> parse_question_type(std::string_view s) {
  for (auto q : kAllQuestionTypes)
    if (to_string(q) == s) return q;
  return std::nullopt;
}

enum class Difficulty { sufficient, likely, conceivable };

inline constexpr std::array<Difficulty, 3> kAllDifficulties{Difficulty::sufficient, Difficulty::likely,
                                                            Difficulty::conceivable};

inline std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::sufficient: return "sufficient";
    case Difficulty::likely: return "likely";
    case Difficulty::conceivable: return "conceivable";
  }
  return "";
}

inline std::optional<Difficulty> parse_difficulty(std::string_view s) {
  for (auto d : kAllDifficulties)
    if (to_string(d) == s) return d;
  return std::nullopt;
}

struct InferenceExample {
  std::string id;
  std::vector<Utterance> dialogue;
  int target_index = 1;  // t, 1-based
  QuestionType question = QuestionType::cause;
  std::string answer;
  std::vector<std::string> counterfactuals;
  std::optional<Difficulty> difficulty;

  const Utterance& target() const { return dialogue.at(static_cast<std::size_t>(target_index - 1)); }

  bool operator==(const InferenceExample&) const = default;
};

inline constexpr std::size_t kMaxCounterfactuals = 4;

/// Throws ValidationError naming the example id on the first broken invariant.
inline void validate(const InferenceExample& ex) {
  auto fail = [&](const std::string& what) {
    throw ValidationError("example '" + ex.id + "': " + what);
  };
  if (ex.id.empty()) throw ValidationError("example with empty id");
  if (ex.dialogue.empty()) fail("empty dialogue");
  for (std::size_t i = 0; i < ex.dialogue.size(); ++i) {
    const auto& u = ex.dialogue[i];
    if (u.index != static_cast<int>(i) + 1) fail("utterance indices are not contiguous from 1");
    if (trim(u.text).empty()) fail("utterance " + std::to_string(u.index) + " has empty text");
  }
  if (ex.target_index < 1 || ex.target_index > static_cast<int>(ex.dialogue.size()))
    fail("target_index " + std::to_string(ex.target_index) + " out of range 1.." +
         std::to_string(ex.dialogue.size()));
  if (trim(ex.answer).empty()) fail("empty answer");
  if (ex.counterfactuals.size() > kMaxCounterfactuals)
    fail("more than " + std::to_string(kMaxCounterfactuals) + " counterfactuals");
  std::set<std::string> seen{normalize(ex.answer)};
  for (const auto& c : ex.counterfactuals) {
    if (!seen.insert(normalize(c)).second)
      fail("counterfactual '" + c + "' duplicates the answer or another counterfactual");
  }
}

// ---------------------------------------------------------------------------
// canonical_jsonl

inline json to_json(const InferenceExample& ex) {
  json dialogue = json::array();
  for (const auto& u : ex.dialogue) dialogue.push_back({{"speaker", u.speaker}, {"text", u.text}});
  return json{{"id", ex.id},
              {"dialogue", std::move(dialogue)},
              {"target_index", ex.target_index},
              {"question", std::string(to_string(ex.question))},
              {"answer", ex.answer},
              {"counterfactuals", ex.counterfactuals},
              {"difficulty", ex.difficulty ? json(std::string(to_string(*ex.difficulty))) : json(nullptr)}};
}

/// Parses one canonical record. Keys outside the schema (such as "generated") are ignored.
inline InferenceExample example_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("record is not a JSON object");
  auto require = [&](const char* key) -> const json& {
    auto it = j.find(key);
    if (it == j.end()) throw ParseError(std::string("missing key '") + key + "'");
    return *it;
  };
  InferenceExample ex;
  try {
    ex.id = require("id").get<std::string>();
    int idx = 1;
    for (const auto& u : require("dialogue")) {
      ex.dialogue.push_back({u.at("speaker").get<std::string>(), u.at("text").get<std::string>(), idx++});
    }
    ex.target_index = require("target_index").get<int>();
    const auto q = require("question").get<std::string>();
    auto qt = parse_question_type(q);
    if (!qt) throw ParseError("unknown question type '" + q + "'");
    ex.question = *qt;
    ex.answer = require("answer").get<std::string>();
    if (auto it = j.find("counterfactuals"); it != j.end() && !it->is_null())
      ex.counterfactuals = it->get<std::vector<std::string>>();
    if (auto it = j.find("difficulty"); it != j.end() && !it->is_null()) {
      const auto d = it->get<std::string>();
      ex.difficulty = parse_difficulty(d);
      if (!ex.difficulty) throw ParseError("unknown difficulty '" + d + "'");
    }
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  }
  return ex;
}

inline std::vector<InferenceExample> read_canonical_jsonl(std::istream& in) {
  std::vector<InferenceExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    InferenceExample ex;
    try {
      ex = example_from_json(json::parse(line));
    } catch (const std::exception& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
    validate(ex);
    out.push_back(std::move(ex));
  }
  return out;
}

inline void write_canonical_jsonl(std::ostream& out, const std::vector<InferenceExample>& examples) {
  for (const auto& ex : examples) out << to_json(ex).dump() << '\n';
}

// ---------------------------------------------------------------------------
// cicero_json: a JSON array of upstream-shaped records
//   {"ID", "Dialogue": ["A: ...", ...], "Target", "Question", "Choices": [...],
//    "Correct Answers": [i] | i, optional "Negatives", "Difficulty", "Clipped"}

namespace cicero_detail {

inline Utterance split_turn(const std::string& raw, int index) {
  const auto pos = raw.find(": ");
  if (pos == std::string::npos || pos == 0) return {"", trim(raw), index};
  return {trim(raw.substr(0, pos)), trim(raw.substr(pos + 2)), index};
}

inline QuestionType map_question(const std::string& q, bool clipped) {
  const std::string s = normalize(q);
  if (s.find("cause") != std::string::npos) return QuestionType::cause;
  if (s.find("prerequisite") != std::string::npos) return QuestionType::prerequisite;
  if (s.find("motivation") != std::string::npos) return QuestionType::motivation;
  if (s.find("reaction") != std::string::npos) return QuestionType::reaction;
  if (s.find("subsequent") != std::string::npos)
    return clipped || s.find("clipped") != std::string::npos ? QuestionType::subsequent_event_clipped
                                                              : QuestionType::subsequent_event;
  throw ParseError("unrecognised question '" + q + "'");
}

}  // namespace cicero_detail

inline InferenceExample example_from_cicero(const json& r, std::size_t position) {
  InferenceExample ex;
  ex.id = r.contains("ID") ? r.at("ID").get<std::string>() : "cicero-" + std::to_string(position);
  int idx = 1;
  for (const auto& turn : r.at("Dialogue")) ex.dialogue.push_back(cicero_detail::split_turn(turn.get<std::string>(), idx++));

  const auto& target = r.at("Target");
  if (target.is_number_integer()) {
    ex.target_index = target.get<int>();
  } else {
    const std::string t = trim(target.get<std::string>());
    ex.target_index = 0;
    for (const auto& u : ex.dialogue) {
      if (u.text == t || u.speaker + ": " + u.text == t) {
        ex.target_index = u.index;
        break;
      }
    }
    if (ex.target_index == 0) throw ValidationError("example '" + ex.id + "': target utterance not found in dialogue");
  }
  const bool clipped = r.contains("Clipped") && r.at("Clipped").get<bool>();
  ex.question = cicero_detail::map_question(r.at("Question").get<std::string>(), clipped);

  const auto choices = r.at("Choices").get<std::vector<std::string>>();
  const auto& ca = r.at("Correct Answers");
  const int gold = ca.is_array() ? ca.at(0).get<int>() : ca.get<int>();
  if (gold < 0 || gold >= static_cast<int>(choices.size()))
    throw ValidationError("example '" + ex.id + "': gold index out of range");
  ex.answer = choices[static_cast<std::size_t>(gold)];

  std::vector<std::string> pool;
  for (std::size_t i = 0; i < choices.size(); ++i)
    if (static_cast<int>(i) != gold) pool.push_back(choices[i]);
  if (r.contains("Negatives"))
    for (const auto& n : r.at("Negatives")) pool.push_back(n.get<std::string>());

  // Upstream data contains repeated and gold-equal choices; drop them here.
  std::set<std::string> seen{normalize(ex.answer)};
  for (auto& c : pool)
    if (!trim(c).empty() && seen.insert(normalize(c)).second) ex.counterfactuals.push_back(std::move(c));
  if (ex.counterfactuals.size() > kMaxCounterfactuals) {
    log(LogLevel::warn, "example '" + ex.id + "': keeping the first " + std::to_string(kMaxCounterfactuals) +
                            " of " + std::to_string(ex.counterfactuals.size()) + " counterfactuals");
    ex.counterfactuals.resize(kMaxCounterfactuals);
  }

  if (r.contains("Difficulty") && !r.at("Difficulty").is_null()) {
    const auto d = normalize(r.at("Difficulty").get<std::string>());
    ex.difficulty = parse_difficulty(d);
    if (!ex.difficulty) throw ParseError("unknown difficulty '" + d + "'");
  }
  return ex;
}

inline std::vector<InferenceExample> read_cicero_json(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("cicero_json: ") + e.what());
  }
  if (!doc.is_array()) throw ParseError("cicero_json: top-level value must be an array of records");
  std::vector<InferenceExample> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    InferenceExample ex;
    try {
      ex = example_from_cicero(doc[i], i);
    } catch (const json::exception& e) {
      throw ParseError("cicero_json record " + std::to_string(i) + ": " + e.what());
    }
    validate(ex);
    out.push_back(std::move(ex));
  }
  return out;
}

enum class DatasetFormat { canonical_jsonl, cicero_json };

inline DatasetFormat parse_format(std::string_view s) {
  if (s == "canonical_jsonl") return DatasetFormat::canonical_jsonl;
  if (s == "cicero_json") return DatasetFormat::cicero_json;
  throw std::invalid_argument("unknown dataset format '" + std::string(s) + "'");
}

inline std::vector<InferenceExample> load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return format == DatasetFormat::canonical_jsonl ? read_canonical_jsonl(in) : read_cicero_json(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void save_dataset(const std::filesystem::path& path, const std::vector<InferenceExample>& examples) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_canonical_jsonl(out, examples);
}

// ---------------------------------------------------------------------------

/// Drops every utterance after the target. Identity when t = I.
inline InferenceExample clip_dialogue(InferenceExample ex) {
  ex.dialogue.resize(static_cast<std::size_t>(ex.target_index));
  return ex;
}

/// Clips subsequent_event_clipped examples; leaves others alone.
inline InferenceExample prepare(InferenceExample ex) {
  if (ex.question == QuestionType::subsequent_event_clipped) return clip_dialogue(std::move(ex));
  return ex;
}

enum class Template {
  standard,    // "default": speaker labels as given
  turn_index,  // speakers rendered as U<i>
};

inline std::string_view to_string(Template t) { return t == Template::turn_index ? "turn_index" : "default"; }

inline Template parse_template(std::string_view id) {
  if (id == "default") return Template::standard;
  if (id == "turn_index") return Template::turn_index;
  throw std::invalid_argument("unknown template_id '" + std::string(id) + "'");
}

struct SerializedInput {
  std::string text;
  std::size_t token_count = 0;
};

inline SerializedInput serialize_input(const InferenceExample& ex, Template tpl = Template::standard) {
  if (ex.question == QuestionType::subsequent_event_clipped &&
      ex.dialogue.size() > static_cast<std::size_t>(ex.target_index))
    throw ValidationError("example '" + ex.id + "': subsequent_event_clipped input must be clipped first");
  auto label = [&](const Utterance& u) {
    return tpl == Template::turn_index ? "U" + std::to_string(u.index) : u.speaker;
  };
  std::string s;
  s += question_text(ex.question);
  s += "\ntarget: ";
  s += ex.target().text;
  s += "\ncontext: ";
  for (std::size_t i = 0; i < ex.dialogue.size(); ++i) {
    if (i) s += '\n';
    s += label(ex.dialogue[i]);
    s += ": ";
    s += ex.dialogue[i].text;
  }
  SerializedInput out;
  out.token_count = tokenize(s).size();
  out.text = std::move(s);
  return out;
}

inline SerializedInput serialize_input(const InferenceExample& ex, std::string_view template_id) {
  return serialize_input(ex, parse_template(template_id));
}

}  // namespace dcl
