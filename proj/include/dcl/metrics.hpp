#pragma once

// Corpus evaluation: BLEU-1..4, ROUGE-L, METEOR (exact + stem stages), CIDEr.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dcl/common.hpp"
#include "dcl/porter.hpp"
#include "dcl/text.hpp"

namespace dcl {

inline constexpr int kMaxNgram = 4;

using NgramCounts = std::unordered_map<std::string, int>;

inline NgramCounts count_ngrams(const TokenSequence& toks, int n) {
  NgramCounts counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i) {
    std::string key = toks[i];
    for (int k = 1; k < n; ++k) {
      key += '\x1f';
      key += toks[i + static_cast<std::size_t>(k)];
    }
    ++counts[key];
  }
  return counts;
}

inline TokenSequence stem_all(const TokenSequence& toks) {
  TokenSequence out;
  out.reserve(toks.size());
  for (const auto& t : toks) out.push_back(stem(t));
  return out;
}

// ---------------------------------------------------------------------------
// BLEU

struct BleuStats {
  std::array<long, kMaxNgram> matched{};
  std::array<long, kMaxNgram> total{};
  long hyp_len = 0;
  long ref_len = 0;

  void add(const TokenSequence& hyp, const TokenSequence& ref) {
    hyp_len += static_cast<long>(hyp.size());
    ref_len += static_cast<long>(ref.size());
    for (int n = 1; n <= kMaxNgram; ++n) {
      const auto h = count_ngrams(hyp, n);
      const auto r = count_ngrams(ref, n);
      for (const auto& [g, c] : h) {
        auto it = r.find(g);
        if (it != r.end()) matched[static_cast<std::size_t>(n - 1)] += std::min(c, it->second);
        total[static_cast<std::size_t>(n - 1)] += c;
      }
    }
  }

  /// BLEU-n for n = 1..max_n. A zero clipped precision at any order makes that score 0.
  std::vector<double> scores(int max_n = kMaxNgram) const {
    std::vector<double> out(static_cast<std::size_t>(max_n), 0.0);
    if (hyp_len == 0) return out;
    const double bp = std::min(1.0, std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len)));
    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
      const auto k = static_cast<std::size_t>(n - 1);
      if (matched[k] == 0 || total[k] == 0) break;  // this and all higher orders stay 0
      log_sum += std::log(static_cast<double>(matched[k]) / static_cast<double>(total[k]));
      out[k] = bp * std::exp(log_sum / n);
    }
    return out;
  }
};

inline std::vector<double> bleu(const std::vector<TokenSequence>& hyps, const std::vector<TokenSequence>& refs,
                                int max_n = kMaxNgram) {
  if (hyps.size() != refs.size()) throw std::invalid_argument("bleu: hypothesis/reference count mismatch");
  if (hyps.empty()) throw std::invalid_argument("bleu: empty corpus");
  if (max_n < 1 || max_n > kMaxNgram) throw std::invalid_argument("bleu: max_n must be in 1..4");
  BleuStats stats;
  for (std::size_t i = 0; i < hyps.size(); ++i) stats.add(hyps[i], refs[i]);
  return stats.scores(max_n);
}

// ---------------------------------------------------------------------------
// ROUGE-L

inline std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline constexpr double kRougeBeta = 1.2;

/// LCS F-measure. Empty input scores 0 (score_corpus records a warning).
inline double rouge_l(const TokenSequence& hyp, const TokenSequence& ref, double beta = kRougeBeta) {
  if (hyp.empty() || ref.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(hyp, ref));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(hyp.size());
  const double r = lcs / static_cast<double>(ref.size());
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

// ---------------------------------------------------------------------------
// METEOR, exact and stem stages only

struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
};

struct Alignment {
  int matches = 0;
  int chunks = 0;
};

namespace meteor_detail {

class Aligner {
public:
  Aligner(const TokenSequence& hyp, const TokenSequence& ref) : cand_(hyp.size()), used_(ref.size(), false) {
    const auto hs = stem_all(hyp), rs = stem_all(ref);
    for (std::size_t i = 0; i < hyp.size(); ++i)
      for (std::size_t j = 0; j < ref.size(); ++j)
        if (hyp[i] == ref[j] || hs[i] == rs[j]) cand_[i].push_back(static_cast<int>(j));
  }

  Alignment solve() {
    target_ = max_matching();
    if (target_ == 0) return {};
    best_chunks_ = INT32_MAX;
    dfs(0, 0, 0, -2);
    return {target_, best_chunks_};
  }

private:
  // Kuhn's augmenting paths; the optimum m is fixed before the chunk search.
  int max_matching() {
    std::vector<int> owner(used_.size(), -1);
    int m = 0;
    for (std::size_t i = 0; i < cand_.size(); ++i) {
      std::vector<bool> seen(used_.size(), false);
      if (augment(static_cast<int>(i), owner, seen)) ++m;
    }
    return m;
  }

  bool augment(int i, std::vector<int>& owner, std::vector<bool>& seen) {
    for (int j : cand_[static_cast<std::size_t>(i)]) {
      if (seen[static_cast<std::size_t>(j)]) continue;
      seen[static_cast<std::size_t>(j)] = true;
      if (owner[static_cast<std::size_t>(j)] < 0 || augment(owner[static_cast<std::size_t>(j)], owner, seen)) {
        owner[static_cast<std::size_t>(j)] = i;
        return true;
      }
    }
    return false;
  }

  // prev_j == -2 marks an unaligned predecessor.
  void dfs(std::size_t i, int matches, int chunks, int prev_j) {
    if (chunks >= best_chunks_) return;
    if (i == cand_.size()) {
      if (matches == target_) best_chunks_ = chunks;
      return;
    }
    int reachable = 0;
    for (std::size_t k = i; k < cand_.size(); ++k)
      for (int j : cand_[k])
        if (!used_[static_cast<std::size_t>(j)]) {
          ++reachable;
          break;
        }
    if (matches + reachable < target_) return;

    // Continuing the current chunk first finds low-chunk solutions early.
    auto& c = cand_[i];
    std::vector<int> order(c.begin(), c.end());
    std::stable_partition(order.begin(), order.end(), [&](int j) { return prev_j >= 0 && j == prev_j + 1; });
    for (int j : order) {
      if (used_[static_cast<std::size_t>(j)]) continue;
      used_[static_cast<std::size_t>(j)] = true;
      const bool extends = prev_j >= 0 && j == prev_j + 1;
      dfs(i + 1, matches + 1, chunks + (extends ? 0 : 1), j);
      used_[static_cast<std::size_t>(j)] = false;
    }
    dfs(i + 1, matches, chunks, -2);
  }

  std::vector<std::vector<int>> cand_;
  std::vector<bool> used_;
  int target_ = 0;
  int best_chunks_ = 0;
};

}  // namespace meteor_detail

/// Alignment that maximises matched unigrams, then minimises chunks.
inline Alignment meteor_align(const TokenSequence& hyp, const TokenSequence& ref) {
  return meteor_detail::Aligner(hyp, ref).solve();
}

inline double meteor_score(const Alignment& a, std::size_t hyp_len, std::size_t ref_len,
                           const MeteorParams& p = {}) {
  if (a.matches == 0 || hyp_len == 0 || ref_len == 0) return 0.0;
  const double m = a.matches;
  const double prec = m / static_cast<double>(hyp_len);
  const double rec = m / static_cast<double>(ref_len);
  const double fmean = prec * rec / (p.alpha * prec + (1.0 - p.alpha) * rec);
  const double penalty = p.gamma * std::pow(static_cast<double>(a.chunks) / m, p.beta);
  return fmean * (1.0 - penalty);
}

inline double meteor_lite(const TokenSequence& hyp, const TokenSequence& ref, const MeteorParams& p = {}) {
  if (hyp.empty() || ref.empty()) return 0.0;
  return meteor_score(meteor_align(hyp, ref), hyp.size(), ref.size(), p);
}

// ---------------------------------------------------------------------------
// CIDEr over stemmed n-grams

class CiderScorer {
public:
  /// The reference set doubles as the idf corpus; it needs two distinct documents.
  explicit CiderScorer(const std::vector<TokenSequence>& refs) : num_docs_(static_cast<double>(refs.size())) {
    std::set<TokenSequence> distinct(refs.begin(), refs.end());
    if (distinct.size() < 2)
      throw std::invalid_argument(
          "cider: the idf corpus needs at least two distinct reference documents; score a corpus, not a single pair");
    for (const auto& r : refs) {
      const auto s = stem_all(r);
      for (int n = 1; n <= kMaxNgram; ++n)
        for (const auto& kv : count_ngrams(s, n)) ++df_[static_cast<std::size_t>(n - 1)][kv.first];
    }
  }

  double score(const TokenSequence& hyp, const TokenSequence& ref) const {
    const auto hs = stem_all(hyp), rs = stem_all(ref);
    double sum = 0.0;
    for (int n = 1; n <= kMaxNgram; ++n) {
      const auto vh = weigh(count_ngrams(hs, n), n);
      const auto vr = weigh(count_ngrams(rs, n), n);
      sum += 10.0 * cosine(vh, vr);
    }
    return sum / kMaxNgram;
  }

  /// ln(|I| / df); n-grams absent from every reference use df = 1.
  double idf(const std::string& ngram, int n) const {
    const auto& table = df_[static_cast<std::size_t>(n - 1)];
    auto it = table.find(ngram);
    const double df = it == table.end() ? 1.0 : static_cast<double>(it->second);
    return std::log(num_docs_ / df);
  }

private:
  using Vec = std::map<std::string, double>;

  Vec weigh(const NgramCounts& counts, int n) const {
    Vec v;
    for (const auto& [g, c] : counts) {
      const double w = c * idf(g, n);
      if (w != 0.0) v[g] = w;
    }
    return v;
  }

  static double cosine(const Vec& a, const Vec& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [g, w] : a) {
      na += w * w;
      auto it = b.find(g);
      if (it != b.end()) dot += w * it->second;
    }
    for (const auto& kv : b) nb += kv.second * kv.second;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
  }

  double num_docs_;
  std::array<std::unordered_map<std::string, int>, kMaxNgram> df_;
};

inline double cider(const std::vector<TokenSequence>& hyps, const std::vector<TokenSequence>& refs) {
  if (hyps.size() != refs.size()) throw std::invalid_argument("cider: hypothesis/reference count mismatch");
  CiderScorer scorer(refs);
  double sum = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) sum += scorer.score(hyps[i], refs[i]);
  return sum / static_cast<double>(hyps.size());
}

// ---------------------------------------------------------------------------
// Reports

struct ScoredPair {
  std::string id;
  std::string hypothesis;
  std::string reference;
};

struct ExampleScores {
  std::string id;
  std::array<double, kMaxNgram> bleu{};
  double meteor = 0.0;
  double rouge_l = 0.0;
  std::optional<double> cider;
};

struct MetricReport {
  std::size_t count = 0;
  std::array<double, kMaxNgram> bleu{};
  double meteor = 0.0;
  double rouge_l = 0.0;
  std::optional<double> cider;  // unset when the subset has fewer than two distinct references
  std::vector<std::string> warnings;
  std::vector<ExampleScores> per_example;
  std::vector<std::pair<std::string, MetricReport>> strata;

  const MetricReport* stratum(const std::string& label) const {
    for (const auto& [k, r] : strata)
      if (k == label) return &r;
    return nullptr;
  }
};

struct ScoreOptions {
  bool per_example = false;
  // Stratification: id -> label. Ids absent from the map are not assigned to any stratum.
  std::optional<std::map<std::string, std::string>> strata_labels;
  // Labels that must appear in the report even when no example carries them.
  std::vector<std::string> required_strata;
};

inline MetricReport score_corpus(const std::vector<ScoredPair>& pairs, const ScoreOptions& opts = {}) {
  if (pairs.empty()) throw std::invalid_argument("score_corpus: no pairs");
  MetricReport rep;
  rep.count = pairs.size();

  std::vector<TokenSequence> hyps, refs;
  hyps.reserve(pairs.size());
  refs.reserve(pairs.size());
  for (const auto& p : pairs) {
    hyps.push_back(tokenize(p.hypothesis));
    refs.push_back(tokenize(p.reference));
    if (hyps.back().empty() || refs.back().empty())
      rep.warnings.push_back("empty sequence in pair '" + p.id + "' scored as 0 for ROUGE-L/METEOR");
  }

  BleuStats stats;
  std::optional<CiderScorer> cider_scorer;
  try {
    cider_scorer.emplace(refs);
  } catch (const std::invalid_argument& e) {
    rep.warnings.push_back(e.what());
  }
  double meteor_sum = 0.0, rouge_sum = 0.0, cider_sum = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    stats.add(hyps[i], refs[i]);
    ExampleScores ex;
    ex.id = pairs[i].id;
    ex.meteor = meteor_lite(hyps[i], refs[i]);
    ex.rouge_l = rouge_l(hyps[i], refs[i]);
    if (cider_scorer) ex.cider = cider_scorer->score(hyps[i], refs[i]);
    meteor_sum += ex.meteor;
    rouge_sum += ex.rouge_l;
    if (ex.cider) cider_sum += *ex.cider;
    if (opts.per_example) {
      BleuStats one;
      one.add(hyps[i], refs[i]);
      const auto s = one.scores();
      std::copy(s.begin(), s.end(), ex.bleu.begin());
      rep.per_example.push_back(std::move(ex));
    }
  }
  const auto b = stats.scores();
  std::copy(b.begin(), b.end(), rep.bleu.begin());
  const auto n = static_cast<double>(pairs.size());
  rep.meteor = meteor_sum / n;
  rep.rouge_l = rouge_sum / n;
  if (cider_scorer) rep.cider = cider_sum / n;

  if (opts.strata_labels) {
    std::set<std::string> ids;
    for (const auto& p : pairs) ids.insert(p.id);
    std::map<std::string, std::vector<ScoredPair>> groups;
    for (const auto& label : opts.required_strata) groups[label];
    for (const auto& [id, label] : *opts.strata_labels)
      if (!ids.count(id)) throw std::invalid_argument("score_corpus: stratum label for unknown id '" + id + "'");
    for (const auto& p : pairs) {
      auto it = opts.strata_labels->find(p.id);
      if (it != opts.strata_labels->end()) groups[it->second].push_back(p);
    }
    ScoreOptions sub;
    sub.per_example = false;
    for (auto& [label, subset] : groups) {
      if (subset.empty()) {
        MetricReport empty;
        empty.warnings.push_back("empty stratum");
        rep.strata.emplace_back(label, std::move(empty));
        continue;
      }
      rep.strata.emplace_back(label, score_corpus(subset, sub));
    }
  }
  return rep;
}

inline nlohmann::json to_json(const MetricReport& r) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(round12(*v)) : json(nullptr); };
  json j;
  j["count"] = r.count;
  if (r.count == 0) {
    j["bleu"] = nullptr;
    j["meteor"] = nullptr;
    j["rouge_l"] = nullptr;
    j["cider"] = nullptr;
  } else {
    j["bleu"] = json::object();
    for (int n = 1; n <= kMaxNgram; ++n) j["bleu"][std::to_string(n)] = round12(r.bleu[static_cast<std::size_t>(n - 1)]);
    j["meteor"] = round12(r.meteor);
    j["rouge_l"] = round12(r.rouge_l);
    j["cider"] = opt(r.cider);
  }
  j["warnings"] = r.warnings;
  if (!r.per_example.empty()) {
    json arr = json::array();
    for (const auto& e : r.per_example) {
      json b = json::array();
      for (double v : e.bleu) b.push_back(round12(v));
      arr.push_back({{"id", e.id}, {"bleu", b}, {"meteor", round12(e.meteor)}, {"rouge_l", round12(e.rouge_l)},
                     {"cider", opt(e.cider)}});
    }
    j["per_example"] = std::move(arr);
  }
  if (!r.strata.empty()) {
    json s = json::object();
    for (const auto& [label, sub] : r.strata) s[label] = to_json(sub);
    j["strata"] = std::move(s);
  }
  return j;
}

}  // namespace dcl
