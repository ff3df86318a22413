#pragma once

// Seeded generator for small dialogue-inference corpora. Every gold answer names
// one "fact" token; the counterfactuals are the gold answer with that fact
// swapped for another one, so only the fact separates right from wrong.

#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dcl/common.hpp"
#include "dcl/corpus.hpp"

namespace dcl {

namespace synthetic_detail {

struct Fact {
  std::string_view word;
  std::string_view clue;  // associated word used when the fact itself is absent
};

inline constexpr std::array<Fact, 16> kFacts{{
    {"umbrella", "rain"},      {"ticket", "concert"}, {"guitar", "music"},     {"laptop", "deadline"},
    {"bicycle", "commute"},    {"passport", "border"}, {"medicine", "fever"},  {"coffee", "sleepy"},
    {"keys", "locked"},        {"camera", "photos"},  {"wallet", "cash"},      {"jacket", "cold"},
    {"recipe", "dinner"},      {"charger", "battery"}, {"map", "directions"},       {"novel", "library"},
}};

inline constexpr std::array<std::string_view, 12> kFiller{
    "how was your weekend",         "i have been busy all week",     "that sounds good to me",
    "let us meet after lunch",      "did you talk to the manager",   "i am not sure about that",
    "we should leave soon",         "my sister is visiting tomorrow", "the traffic was terrible today",
    "can you call me later",        "i will think about it",         "that is a great idea",
};

inline constexpr std::array<std::string_view, 4> kFactLines{
    "i forgot my {} at home",
    "do you still have the {}",
    "i need to find the {} before we go",
    "someone borrowed my {} yesterday",
};

inline constexpr std::array<std::string_view, 4> kClueLines{
    "there was so much {} this morning",
    "it is all about the {} again",
    "i keep thinking about the {}",
    "the {} made everything harder",
};

inline std::string fill(std::string_view pattern, std::string_view word) {
  std::string s(pattern);
  const auto pos = s.find("{}");
  return s.replace(pos, 2, word);
}

inline std::string answer_for(QuestionType q, std::string_view fact) {
  switch (q) {
    case QuestionType::cause: return fill("lost the {}", fact);
    case QuestionType::subsequent_event:
    case QuestionType::subsequent_event_clipped: return fill("fetches the {}", fact);
    case QuestionType::prerequisite: return fill("owned a {}", fact);
    case QuestionType::motivation: return fill("wants the {}", fact);
    case QuestionType::reaction: return fill("offers a {}", fact);
  }
  return {};
}

}  // namespace synthetic_detail

struct SyntheticOptions {
  std::size_t count = 50;
  std::uint64_t seed = 7;
  std::string id_prefix = "ex";
};

/// Difficulty follows where the fact shows up: in the target utterance
/// (sufficient), elsewhere in the dialogue (likely), or only through its clue
/// word (conceivable).
inline std::vector<InferenceExample> make_synthetic_corpus(const SyntheticOptions& opt) {
  using namespace synthetic_detail;
  Rng rng(derive_seed(opt.seed, "synthetic-" + opt.id_prefix));
  std::vector<InferenceExample> out;
  out.reserve(opt.count);
  for (std::size_t n = 0; n < opt.count; ++n) {
    InferenceExample ex;
    ex.id = opt.id_prefix + "-" + std::to_string(n);
    const std::size_t fact = uniform_index(rng, kFacts.size());
    ex.question = kAllQuestionTypes[uniform_index(rng, kAllQuestionTypes.size())];
    const auto difficulty = kAllDifficulties[uniform_index(rng, kAllDifficulties.size())];
    ex.difficulty = difficulty;

    const std::size_t turns = 3 + uniform_index(rng, 3);
    const int target = 2 + static_cast<int>(uniform_index(rng, turns - 1));
    ex.target_index = target;
    std::size_t fact_turn = static_cast<std::size_t>(target);
    if (difficulty != Difficulty::sufficient) {
      // any turn other than the target, kept at or before it so clipping preserves it
      fact_turn = 1 + uniform_index(rng, static_cast<std::size_t>(target - 1));
    }
    for (std::size_t i = 1; i <= turns; ++i) {
      std::string text;
      if (i == fact_turn && difficulty == Difficulty::conceivable)
        text = fill(kClueLines[uniform_index(rng, kClueLines.size())], kFacts[fact].clue);
      else if (i == fact_turn)
        text = fill(kFactLines[uniform_index(rng, kFactLines.size())], kFacts[fact].word);
      else
        text = std::string(kFiller[uniform_index(rng, kFiller.size())]);
      ex.dialogue.push_back({i % 2 ? "A" : "B", text, static_cast<int>(i)});
    }
    ex.answer = answer_for(ex.question, kFacts[fact].word);

    std::vector<std::size_t> others;
    for (std::size_t f = 0; f < kFacts.size(); ++f)
      if (f != fact) others.push_back(f);
    shuffle_in_place(others, rng);
    for (std::size_t c = 0; c < kMaxCounterfactuals; ++c)
      ex.counterfactuals.push_back(answer_for(ex.question, kFacts[others[c]].word));
    validate(ex);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace dcl
