#pragma once

// Negative-sample procedures: dataset counterfactuals, non-optimal generation,
// masked-LM token replacement and in-batch answers.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dcl/backend.hpp"
#include "dcl/common.hpp"
#include "dcl/corpus.hpp"

namespace dcl {

enum class NegativeStrategy { counterfactual, non_optimal, replace_zs, replace_mcq, in_batch };

inline std::string_view to_string(NegativeStrategy s) {
  switch (s) {
    case NegativeStrategy::counterfactual: return "counterfactual";
    case NegativeStrategy::non_optimal: return "non_optimal";
    case NegativeStrategy::replace_zs: return "replace_zs";
    case NegativeStrategy::replace_mcq: return "replace_mcq";
    case NegativeStrategy::in_batch: return "in_batch";
  }
  return "";
}

inline NegativeStrategy parse_strategy(std::string_view s) {
  for (auto v : {NegativeStrategy::counterfactual, NegativeStrategy::non_optimal, NegativeStrategy::replace_zs,
                 NegativeStrategy::replace_mcq, NegativeStrategy::in_batch})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown negative strategy '" + std::string(s) + "'");
}

struct NegativeProvenance {
  std::uint64_t seed = 0;
  std::optional<std::size_t> source_index;        // counterfactual slot or batch position
  std::vector<std::size_t> replaced_positions;     // token_replace only
  int attempts = 0;                                // sampling attempts spent on this slot
};

struct DroppedSlot {
  std::size_t slot = 0;
  int attempts = 0;
  std::string reason;
};

struct NegativeSet {
  std::string example_id;
  NegativeStrategy strategy = NegativeStrategy::counterfactual;
  std::vector<std::string> negatives;
  std::vector<NegativeProvenance> provenance;
  std::vector<DroppedSlot> dropped;
};

inline nlohmann::json to_json(const NegativeSet& s) {
  using nlohmann::json;
  json prov = json::array();
  for (const auto& p : s.provenance) {
    json e{{"seed", p.seed}, {"attempts", p.attempts}};
    e["source_index"] = p.source_index ? json(*p.source_index) : json(nullptr);
    if (!p.replaced_positions.empty()) e["replaced_positions"] = p.replaced_positions;
    prov.push_back(std::move(e));
  }
  json dropped = json::array();
  for (const auto& d : s.dropped) dropped.push_back({{"slot", d.slot}, {"attempts", d.attempts}, {"reason", d.reason}});
  return {{"example_id", s.example_id},
          {"strategy", std::string(to_string(s.strategy))},
          {"negatives", s.negatives},
          {"provenance", std::move(prov)},
          {"dropped", std::move(dropped)}};
}

// ---------------------------------------------------------------------------

/// m = |counterfactuals| returns them all in stored order; smaller m draws a
/// seeded sample without replacement, kept in stored order.
inline NegativeSet pick_counterfactuals(const InferenceExample& ex, std::size_t m, std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("pick_counterfactuals: m must be >= 1");
  if (ex.counterfactuals.size() < m)
    throw std::invalid_argument("pick_counterfactuals: example '" + ex.id + "' has " +
                                std::to_string(ex.counterfactuals.size()) + " counterfactuals, " +
                                std::to_string(m) + " requested");
  NegativeSet out{ex.id, NegativeStrategy::counterfactual, {}, {}, {}};
  const std::uint64_t s = derive_seed(seed, ex.id);
  std::vector<std::size_t> idx(ex.counterfactuals.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (m < idx.size()) {
    Rng rng(s);
    shuffle_in_place(idx, rng);
    idx.resize(m);
    std::sort(idx.begin(), idx.end());
  }
  for (std::size_t i : idx) {
    out.negatives.push_back(ex.counterfactuals[i]);
    out.provenance.push_back({s, i, {}, 0});
  }
  return out;
}

/// Gold answers of every other batch member, in batch order. Duplicated gold
/// strings are kept.
inline std::vector<std::string> inbatch_negatives(const std::vector<std::string>& batch_answers, std::size_t i) {
  if (batch_answers.size() < 2) throw std::invalid_argument("inbatch_negatives: batch size must be at least 2");
  if (i >= batch_answers.size()) throw std::out_of_range("inbatch_negatives: index out of range");
  std::vector<std::string> out;
  for (std::size_t j = 0; j < batch_answers.size(); ++j)
    if (j != i) out.push_back(batch_answers[j]);
  return out;
}

// ---------------------------------------------------------------------------

struct NonOptimalConfig {
  std::size_t m = 4;
  int k = 10;
  int attempts = 5;
  std::size_t max_len = 24;
  std::uint64_t seed = 0;
};

/// Top-k samples from the model. Samples equal to gold (normalised) or empty are
/// redrawn up to `attempts` times; a slot that never succeeds is dropped.
template <ModelBackend B>
NegativeSet generate_nonoptimal(const B& backend, const InferenceExample& ex, std::span<const TokenId> input,
                                const NonOptimalConfig& cfg) {
  NegativeSet out{ex.id, NegativeStrategy::non_optimal, {}, {}, {}};
  const std::string gold = normalize(ex.answer);
  const std::uint64_t base = derive_seed(cfg.seed, ex.id);
  std::set<std::string> seen;
  std::uint64_t draw = 0;
  for (std::size_t slot = 0; slot < cfg.m; ++slot) {
    bool filled = false;
    int tries = 0;
    while (tries < cfg.attempts) {
      ++tries;
      const std::uint64_t s = derive_seed(base, std::to_string(draw++));
      DecodeOptions opts{DecodeMethod::top_k, cfg.k, s, cfg.max_len};
      const auto ids = generate(backend, input, opts);
      const std::string text = backend.vocab().decode(ids);
      const std::string norm = normalize(text);
      if (norm.empty() || norm == gold || seen.count(norm)) continue;
      seen.insert(norm);
      out.negatives.push_back(text);
      out.provenance.push_back({s, std::nullopt, {}, tries});
      filled = true;
      break;
    }
    if (!filled) out.dropped.push_back({slot, tries, "every sample was empty, gold or a duplicate"});
  }
  return out;
}

// ---------------------------------------------------------------------------

enum class ReplaceMode { zero_shot, mcq };

struct ReplaceConfig {
  double threshold = 0.75;
  int k = 10;
  ReplaceMode mode = ReplaceMode::zero_shot;
  std::uint64_t seed = 0;
  std::size_t m = 1;  // negatives drawn per example, all sharing the selected positions
};

struct ReplacementSelection {
  std::vector<double> delta;           // |log p(a_j | X + A\j) - log p(a_j | A\j)| per position
  std::vector<std::size_t> positions;  // selected set S
  bool fallback = false;               // no position cleared the threshold
};

/// Positions whose masked log-likelihood moves by more than the threshold when
/// the context is added. Falls back to the argmax position (lowest index on ties).
template <ModelBackend B>
ReplacementSelection select_replacements(const B& scorer, std::span<const TokenId> answer,
                                         std::span<const TokenId> context, double threshold) {
  if (answer.empty()) throw std::invalid_argument("token_replace: gold answer has no tokens");
  ReplacementSelection sel;
  for (std::size_t j = 0; j < answer.size(); ++j) {
    const auto tok = static_cast<std::size_t>(answer[j]);
    const double with = scorer.masked_logits(answer, j, MaskCondition::with_context, context)[tok];
    const double without = scorer.masked_logits(answer, j, MaskCondition::answer_only, context)[tok];
    sel.delta.push_back(std::abs(with - without));
    if (sel.delta.back() > threshold) sel.positions.push_back(j);
  }
  if (sel.positions.empty()) {
    sel.fallback = true;
    sel.positions.push_back(static_cast<std::size_t>(
        std::distance(sel.delta.begin(), std::max_element(sel.delta.begin(), sel.delta.end()))));
  }
  return sel;
}

/// Replacement candidates for a masked position: the top-k ordinary tokens of the
/// answer-only distribution minus the gold token; the (k+1)-th when that empties the list.
inline std::vector<TokenId> replacement_candidates(std::span<const double> logp, TokenId gold, int k) {
  std::vector<TokenId> ranked;
  for (TokenId t : ranked_tokens(logp))
    if (!Vocabulary::is_special(t)) ranked.push_back(t);
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < ranked.size() && i < static_cast<std::size_t>(k); ++i)
    if (ranked[i] != gold) out.push_back(ranked[i]);
  if (out.empty() && ranked.size() > static_cast<std::size_t>(k)) out.push_back(ranked[static_cast<std::size_t>(k)]);
  return out;
}

template <ModelBackend B>
NegativeSet token_replace(const B& scorer, const InferenceExample& ex, std::span<const TokenId> context,
                          const ReplaceConfig& cfg) {
  if (!scorer.capabilities().masked_logits)
    throw std::invalid_argument("token_replace: scorer lacks masked_logits");
  if (!(cfg.threshold > 0.0)) throw std::invalid_argument("token_replace: threshold must be positive");
  if (cfg.k < 1 || static_cast<std::size_t>(cfg.k) > scorer.vocab().size())
    throw std::invalid_argument("token_replace: k must be in 1..|V|");

  const TokenSequence gold_tokens = tokenize(ex.answer);
  const auto answer = scorer.vocab().encode(gold_tokens);
  const auto sel = select_replacements(scorer, answer, context, cfg.threshold);

  std::vector<std::vector<TokenId>> candidates;
  for (std::size_t j : sel.positions) {
    const auto logp = scorer.masked_logits(answer, j, MaskCondition::answer_only, context);
    candidates.push_back(replacement_candidates(logp, answer[j], cfg.k));
  }

  NegativeSet out{ex.id, cfg.mode == ReplaceMode::zero_shot ? NegativeStrategy::replace_zs
                                                            : NegativeStrategy::replace_mcq,
                  {}, {}, {}};
  const std::string gold = normalize(join(gold_tokens));
  const std::uint64_t base = derive_seed(cfg.seed, ex.id);
  std::set<std::string> seen;
  std::uint64_t draw = 0;
  const int max_tries = 5;
  for (std::size_t slot = 0; slot < cfg.m; ++slot) {
    bool filled = false;
    int tries = 0;
    while (tries < max_tries) {
      ++tries;
      const std::uint64_t s = derive_seed(base, std::to_string(draw++));
      Rng rng(s);
      TokenSequence toks = gold_tokens;
      bool complete = true;
      for (std::size_t c = 0; c < sel.positions.size(); ++c) {
        if (candidates[c].empty()) {
          complete = false;
          break;
        }
        toks[sel.positions[c]] = scorer.vocab().token(candidates[c][uniform_index(rng, candidates[c].size())]);
      }
      if (!complete) break;
      const std::string text = join(toks);
      if (normalize(text) == gold || !seen.insert(text).second) continue;
      out.negatives.push_back(text);
      out.provenance.push_back({s, std::nullopt, sel.positions, tries});
      filled = true;
      break;
    }
    if (!filled) out.dropped.push_back({slot, tries, "no distinct replacement available"});
  }
  return out;
}

}  // namespace dcl
