#pragma once

// Pairwise system comparison: win/tie/lose, winning rate, agreement and
// significance, optionally broken down by stratum.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dcl/common.hpp"
#include "dcl/porter.hpp"
#include "dcl/statistics.hpp"
#include "dcl/text.hpp"

namespace dcl {

enum class Choice { option_1, option_2, both, neither };

inline constexpr std::array<Choice, 4> kAllChoices{Choice::option_1, Choice::option_2, Choice::both, Choice::neither};

inline std::string_view to_string(Choice c) {
  switch (c) {
    case Choice::option_1: return "option_1";
    case Choice::option_2: return "option_2";
    case Choice::both: return "both";
    case Choice::neither: return "neither";
  }
  return "";
}

inline Choice parse_choice(std::string_view s) {
  for (auto c : kAllChoices)
    if (to_string(c) == s) return c;
  throw std::invalid_argument("unknown choice '" + std::string(s) + "'");
}

struct Judgment {
  std::string item_id;
  std::string rater_id;
  Choice choice = Choice::neither;
};

inline Judgment judgment_from_json(const nlohmann::json& j) {
  return {j.at("item_id").get<std::string>(), j.at("rater_id").get<std::string>(),
          parse_choice(j.at("choice").get<std::string>())};
}

struct ItemVotes {
  std::string item_id;
  std::vector<Choice> votes;  // ordered by rater id
};

/// Groups judgments by item (first-appearance order) and checks that every item
/// has the same raters count with no rater repeated.
inline std::vector<ItemVotes> group_by_item(const std::vector<Judgment>& js) {
  std::vector<ItemVotes> items;
  std::map<std::string, std::size_t> pos;
  std::map<std::string, std::map<std::string, Choice>> by_item;
  for (const auto& j : js) {
    if (!pos.count(j.item_id)) {
      pos[j.item_id] = items.size();
      items.push_back({j.item_id, {}});
    }
    if (!by_item[j.item_id].emplace(j.rater_id, j.choice).second)
      throw std::invalid_argument("judgments: rater '" + j.rater_id + "' appears twice on item '" + j.item_id + "'");
  }
  std::optional<std::size_t> n;
  for (auto& it : items) {
    for (const auto& [rater, c] : by_item[it.item_id]) it.votes.push_back(c);
    if (!n) n = it.votes.size();
    if (it.votes.size() != *n)
      throw std::invalid_argument("judgments: incomplete rater coverage on item '" + it.item_id + "'");
  }
  return items;
}

inline Choice other_side(Choice side) {
  if (side == Choice::option_1) return Choice::option_2;
  if (side == Choice::option_2) return Choice::option_1;
  throw std::invalid_argument("side must be option_1 or option_2");
}

enum class AggregationRule {
  strict_majority,  // per item: more than half of the raters pick a side, else tie
  per_judgment,     // every judgment counted on its own
};

inline std::string_view to_string(AggregationRule r) {
  return r == AggregationRule::strict_majority ? "strict_majority" : "per_judgment";
}

struct WinTieLose {
  double win = 0.0;  // percentages
  double tie = 0.0;
  double lose = 0.0;
  std::size_t units = 0;  // items or judgments, depending on the rule
  AggregationRule rule = AggregationRule::strict_majority;
};

inline WinTieLose win_tie_lose(const std::vector<ItemVotes>& items, Choice side,
                               AggregationRule rule = AggregationRule::strict_majority) {
  const Choice other = other_side(side);
  std::size_t win = 0, tie = 0, lose = 0;
  for (const auto& it : items) {
    if (rule == AggregationRule::per_judgment) {
      for (Choice c : it.votes) {
        if (c == side) ++win;
        else if (c == other) ++lose;
        else ++tie;
      }
      continue;
    }
    const auto n = it.votes.size();
    const auto s = static_cast<std::size_t>(std::count(it.votes.begin(), it.votes.end(), side));
    const auto o = static_cast<std::size_t>(std::count(it.votes.begin(), it.votes.end(), other));
    if (2 * s > n) ++win;
    else if (2 * o > n) ++lose;
    else ++tie;
  }
  WinTieLose r;
  r.rule = rule;
  r.units = win + tie + lose;
  if (r.units == 0) return r;
  const double u = static_cast<double>(r.units);
  r.win = 100.0 * static_cast<double>(win) / u;
  r.tie = 100.0 * static_cast<double>(tie) / u;
  r.lose = 100.0 * static_cast<double>(lose) / u;
  return r;
}

inline WinTieLose win_tie_lose(const std::vector<Judgment>& js, Choice side,
                               AggregationRule rule = AggregationRule::strict_majority) {
  return win_tie_lose(group_by_item(js), side, rule);
}

struct WinningRate {
  double rate = 0.0;
  std::vector<double> per_item;  // mean score per item, in item order
};

/// One point per judgment choosing `side` or "both"; averaged over all judgments.
inline WinningRate winning_rate(const std::vector<ItemVotes>& items, Choice side) {
  other_side(side);
  WinningRate r;
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& it : items) {
    double s = 0.0;
    for (Choice c : it.votes) s += (c == side || c == Choice::both) ? 1.0 : 0.0;
    total += s;
    count += it.votes.size();
    r.per_item.push_back(it.votes.empty() ? 0.0 : s / static_cast<double>(it.votes.size()));
  }
  r.rate = count ? total / static_cast<double>(count) : 0.0;
  return r;
}

inline WinningRate winning_rate(const std::vector<Judgment>& js, Choice side) {
  return winning_rate(group_by_item(js), side);
}

inline std::vector<std::vector<int>> count_table(const std::vector<ItemVotes>& items) {
  std::vector<std::vector<int>> t;
  for (const auto& it : items) {
    std::vector<int> row(kAllChoices.size(), 0);
    for (Choice c : it.votes) ++row[static_cast<std::size_t>(c)];
    t.push_back(std::move(row));
  }
  return t;
}

inline KappaResult fleiss_kappa(const std::vector<Judgment>& js) { return fleiss_kappa(count_table(group_by_item(js))); }

// ---------------------------------------------------------------------------
// Plausibility scorer seam. The stub scores lexical support only.

namespace plausibility_detail {
inline const std::set<std::string>& stopwords() {
  static const std::set<std::string> s{
      "a",     "an",    "the",   "and",  "or",   "but",   "if",    "of",    "to",    "in",   "on",    "at",
      "by",    "for",   "with",  "from", "as",   "is",    "are",   "was",   "were",  "be",   "been",  "being",
      "am",    "it",    "its",   "this", "that", "these", "those", "he",    "she",   "they", "them",  "his",
      "her",   "their", "we",    "us",   "our",  "you",   "your",  "i",     "me",    "my",   "will",  "would",
      "could", "should", "can",  "may",  "might", "do",   "does",  "did",   "has",   "have", "had",   "not",
      "no",    "so",    "than",  "then", "there", "what", "which", "who",   "whom",  "when", "where", "why",
      "how",   "all",   "any",   "some", "about", "into", "up",    "out",   "'s",    "n't",  "'t",    "'re",
      "'ll",   "'ve",   "'m",    "'d",   "him",  "also",  "just",  "very",  "too",   "more", "most"};
  return s;
}

inline bool content_word(const std::string& t) {
  bool alpha = false;
  for (unsigned char c : t)
    if (std::isalpha(c) || c >= 0x80) alpha = true;
  return alpha && !stopwords().count(t);
}
}  // namespace plausibility_detail

/// Fraction of the hypothesis' content-word stems found among the context stems.
inline double plausibility_stub(std::string_view hypothesis, std::string_view context) {
  std::set<std::string> ctx;
  for (const auto& t : tokenize(context)) ctx.insert(stem(t));
  std::size_t total = 0, found = 0;
  for (const auto& t : tokenize(hypothesis)) {
    if (!plausibility_detail::content_word(t)) continue;
    ++total;
    if (ctx.count(stem(t))) ++found;
  }
  return total ? static_cast<double>(found) / static_cast<double>(total) : 0.0;
}

// ---------------------------------------------------------------------------
// Stratified comparison

struct StatBlock {
  std::size_t items = 0;
  bool defined = false;  // fewer than two items leaves statistics undefined
  WinTieLose wtl;
  std::optional<KappaResult> kappa;
  double winning_rate_a = 0.0;
  double winning_rate_b = 0.0;
  std::optional<TTestResult> ttest;
  bool significant_at_005 = false;
};

struct ComparisonReport {
  std::string source;  // "judgments" or "automatic:<metric>"
  AggregationRule rule = AggregationRule::strict_majority;
  StatBlock overall;
  std::vector<std::pair<std::string, StatBlock>> strata;

  const StatBlock* stratum(const std::string& label) const {
    for (const auto& [k, b] : strata)
      if (k == label) return &b;
    return nullptr;
  }
};

/// Paired per-item scores for systems a and b (automatic comparisons).
struct ScoreSeries {
  std::map<std::string, double> a;
  std::map<std::string, double> b;
};

/// One pseudo-judgment per item: the higher-scoring side, or "both" on ties.
inline std::vector<Judgment> judgments_from_scores(const std::vector<std::string>& item_ids, const ScoreSeries& s) {
  std::vector<Judgment> out;
  for (const auto& id : item_ids) {
    const double a = s.a.at(id), b = s.b.at(id);
    out.push_back({id, "auto", a > b ? Choice::option_1 : (b > a ? Choice::option_2 : Choice::both)});
  }
  return out;
}

namespace comparison_detail {

inline StatBlock block(const std::vector<ItemVotes>& items, const ScoreSeries* scores, AggregationRule rule) {
  StatBlock b;
  b.items = items.size();
  if (items.size() < 2) return b;
  b.defined = true;
  b.wtl = win_tie_lose(items, Choice::option_1, rule);
  const auto wa = winning_rate(items, Choice::option_1);
  const auto wb = winning_rate(items, Choice::option_2);
  b.winning_rate_a = wa.rate;
  b.winning_rate_b = wb.rate;
  if (items.front().votes.size() >= 2) {
    auto k = fleiss_kappa(count_table(items));
    if (!k.degenerate) b.kappa = k;
  }
  if (scores) {
    std::vector<double> xa, xb;
    for (const auto& it : items) {
      xa.push_back(scores->a.at(it.item_id));
      xb.push_back(scores->b.at(it.item_id));
    }
    b.ttest = paired_ttest(xa, xb);
  } else {
    b.ttest = paired_ttest(wa.per_item, wb.per_item);
  }
  b.significant_at_005 = b.ttest->p_two_sided < 0.05;
  return b;
}

}  // namespace comparison_detail

/// Statistics overall and per stratum. Every item needs a label; `required`
/// labels appear even when empty (reported as undefined).
inline ComparisonReport stratified_compare(const std::vector<Judgment>& judgments,
                                           const std::map<std::string, std::string>& labels,
                                           const std::vector<std::string>& required = {},
                                           const ScoreSeries* scores = nullptr, std::string source = "judgments",
                                           AggregationRule rule = AggregationRule::strict_majority) {
  const auto items = group_by_item(judgments);
  ComparisonReport rep;
  rep.source = std::move(source);
  rep.rule = rule;
  rep.overall = comparison_detail::block(items, scores, rule);
  std::map<std::string, std::vector<ItemVotes>> groups;
  for (const auto& r : required) groups[r];
  for (const auto& it : items) {
    auto l = labels.find(it.item_id);
    if (l == labels.end()) throw std::invalid_argument("stratified_compare: item '" + it.item_id + "' has no label");
    groups[l->second].push_back(it);
  }
  for (const auto& [label, subset] : groups)
    rep.strata.emplace_back(label, comparison_detail::block(subset, scores, rule));
  return rep;
}

inline nlohmann::json to_json(const StatBlock& b) {
  using nlohmann::json;
  json j{{"items", b.items}, {"defined", b.defined}};
  if (!b.defined) {
    for (const char* k : {"win", "tie", "lose", "kappa", "winning_rate_a", "winning_rate_b", "t_statistic", "df",
                          "p_value", "significant_at_005"})
      j[k] = nullptr;
    return j;
  }
  j["win"] = round12(b.wtl.win);
  j["tie"] = round12(b.wtl.tie);
  j["lose"] = round12(b.wtl.lose);
  j["kappa"] = b.kappa ? json(round12(b.kappa->kappa)) : json(nullptr);
  j["winning_rate_a"] = round12(b.winning_rate_a);
  j["winning_rate_b"] = round12(b.winning_rate_b);
  if (b.ttest && std::isfinite(b.ttest->t)) j["t_statistic"] = round12(b.ttest->t);
  else if (b.ttest) j["t_statistic"] = b.ttest->t > 0 ? "inf" : "-inf";
  j["df"] = b.ttest ? json(b.ttest->df) : json(nullptr);
  j["p_value"] = b.ttest ? json(round12(b.ttest->p_two_sided)) : json(nullptr);
  j["degenerate_ttest"] = b.ttest && b.ttest->degenerate;
  j["significant_at_005"] = b.significant_at_005;
  return j;
}

inline nlohmann::json to_json(const ComparisonReport& r) {
  nlohmann::json strata = nlohmann::json::object();
  for (const auto& [k, b] : r.strata) strata[k] = to_json(b);
  return {{"source", r.source},
          {"aggregation_rule", std::string(to_string(r.rule))},
          {"side_a", "option_1"},
          {"side_b", "option_2"},
          {"overall", to_json(r.overall)},
          {"strata", std::move(strata)}};
}

}  // namespace dcl
