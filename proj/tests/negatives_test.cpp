#include <gtest/gtest.h>

#include <algorithm>

#include "dcl/negatives.hpp"
#include "dcl/synthetic.hpp"
#include "dcl/trainer.hpp"
#include "oracles.hpp"

using namespace dcl;

namespace {

struct Fixture {
  std::vector<InferenceExample> examples;
  Vocabulary vocab;
  ToyBackend scorer;
};

Fixture fixture() {
  auto ex = make_synthetic_corpus({12, 5, "neg"});
  auto vocab = build_vocabulary(ex, Template::standard);
  auto scorer = oracle::context_sensitive_scorer(vocab, 77);
  return {std::move(ex), std::move(vocab), std::move(scorer)};
}

std::vector<std::size_t> differing(const TokenSequence& a, const TokenSequence& b) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) out.push_back(i);
  return out;
}

InferenceExample four_choice() {
  InferenceExample ex;
  ex.id = "q";
  ex.dialogue = {{"A", "hello there", 1}, {"B", "hi", 2}};
  ex.target_index = 2;
  ex.answer = "gold answer";
  ex.counterfactuals = {"one", "two", "three", "four"};
  return ex;
}

}  // namespace

TEST(PickCounterfactuals, FullSetSubsetAndErrors) {
  const auto ex = four_choice();
  EXPECT_EQ(pick_counterfactuals(ex, 4, 1).negatives, ex.counterfactuals);
  for (std::size_t m = 1; m <= 4; ++m) {
    const auto a = pick_counterfactuals(ex, m, 9), b = pick_counterfactuals(ex, m, 9);
    EXPECT_EQ(a.negatives, b.negatives);
    EXPECT_EQ(a.negatives.size(), m);
    std::vector<std::size_t> src;
    for (const auto& p : a.provenance) src.push_back(*p.source_index);
    EXPECT_TRUE(std::is_sorted(src.begin(), src.end()));
    EXPECT_EQ(std::set<std::size_t>(src.begin(), src.end()).size(), m);
  }
  EXPECT_THROW(pick_counterfactuals(ex, 5, 1), std::invalid_argument);
  EXPECT_THROW(pick_counterfactuals(ex, 0, 1), std::invalid_argument);
}

TEST(PickCounterfactuals, SeedsCoverDifferentSubsets) {
  const auto ex = four_choice();
  std::set<std::vector<std::string>> seen;
  for (std::uint64_t s = 0; s < 40; ++s) seen.insert(pick_counterfactuals(ex, 2, s).negatives);
  EXPECT_EQ(seen.size(), 6u);  // all C(4,2) subsets are reachable
}

TEST(InBatch, OrderAndDuplicates) {
  const std::vector<std::string> b{"x", "y", "x"};
  EXPECT_EQ(inbatch_negatives(b, 0), (std::vector<std::string>{"y", "x"}));
  EXPECT_EQ(inbatch_negatives(b, 1), (std::vector<std::string>{"x", "x"}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(inbatch_negatives(b, i).size(), 2u);
  EXPECT_THROW(inbatch_negatives({"x"}, 0), std::invalid_argument);
  EXPECT_THROW(inbatch_negatives(b, 3), std::out_of_range);
}

TEST(NonOptimal, GoldOnlyBackendDropsEverySlot) {
  InferenceExample ex = four_choice();
  ex.answer = "a";
  auto m = ToyBackend::zeros(Vocabulary({"a"}), 2);
  auto& P = m.params();
  // prefix-steered: "a" first, EOS second, everything else far below
  P.E.row(Vocabulary::kBos)[0] = 1.0;
  P.E.row(5)[0] = -1.0;
  P.E.row(5)[1] = 2.0;
  P.U.row(5)[0] = 4000.0;
  P.U.row(Vocabulary::kEos)[1] = 4000.0;
  const auto set = generate_nonoptimal(m, ex, {}, {4, 3, 5, 8, 1});
  EXPECT_TRUE(set.negatives.empty());
  ASSERT_EQ(set.dropped.size(), 4u);
  for (const auto& d : set.dropped) EXPECT_EQ(d.attempts, 5);
}

TEST(NonOptimal, UniformBackendInvariantsAndDeterminism) {
  const auto f = fixture();
  const auto m = ToyBackend::zeros(f.vocab, 4);
  for (const auto& ex : f.examples) {
    const auto input = encode_example(f.vocab, ex, Template::standard).input;
    NonOptimalConfig cfg{4, 10, 5, 6, 3};
    const auto a = generate_nonoptimal(m, ex, input, cfg), b = generate_nonoptimal(m, ex, input, cfg);
    EXPECT_EQ(a.negatives, b.negatives);
    EXPECT_EQ(a.negatives.size(), 4u);
    for (const auto& n : a.negatives) {
      EXPECT_NE(normalize(n), normalize(ex.answer));
      // decoded ids are joined by single spaces
      EXPECT_LE(static_cast<std::size_t>(std::count(n.begin(), n.end(), ' ')) + 1, 6u);
    }
  }
}

TEST(TokenReplace, MatchesBruteForceSelection) {
  const auto f = fixture();
  std::size_t multi = 0;
  for (const auto& ex : f.examples) {
    const auto input = encode_example(f.vocab, ex, Template::standard).input;
    const auto gold = tokenize(ex.answer);
    const auto expected = oracle::replaced_positions(f.scorer, f.vocab.encode(gold), input, 0.75);
    ReplaceConfig cfg;
    cfg.seed = 4;
    cfg.m = 2;
    const auto set = token_replace(f.scorer, ex, input, cfg);
    ASSERT_FALSE(set.negatives.empty()) << ex.id;
    for (std::size_t i = 0; i < set.negatives.size(); ++i) {
      const auto toks = tokenize(set.negatives[i]);
      ASSERT_EQ(toks.size(), gold.size());
      EXPECT_EQ(differing(toks, gold), expected) << ex.id;
      EXPECT_EQ(set.provenance[i].replaced_positions, expected);
      EXPECT_NE(normalize(set.negatives[i]), normalize(ex.answer));
    }
    multi += expected.size() > 1;
  }
  EXPECT_GT(multi, 0u);  // the fixture exercises multi-position selection
}

TEST(TokenReplace, ThresholdMonotonicity) {
  const auto f = fixture();
  for (const auto& ex : f.examples) {
    const auto input = encode_example(f.vocab, ex, Template::standard).input;
    const auto answer = f.vocab.encode_text(ex.answer);
    std::vector<std::size_t> prev;
    bool first = true;
    for (double t : {0.25, 0.5, 0.75, 1.0}) {
      const auto sel = select_replacements(f.scorer, answer, input, t);
      if (!sel.fallback) {
        if (!first) {
          EXPECT_TRUE(std::includes(prev.begin(), prev.end(), sel.positions.begin(), sel.positions.end()));
        }
        prev = sel.positions;
        first = false;
      } else {
        prev.clear();
        first = false;
      }
    }
  }
}

TEST(TokenReplace, ForcedFallbackAndZeroScorer) {
  const auto f = fixture();
  const auto& ex = f.examples[0];
  const auto input = encode_example(f.vocab, ex, Template::standard).input;
  ReplaceConfig cfg;
  cfg.threshold = 1e9;
  const auto set = token_replace(f.scorer, ex, input, cfg);
  ASSERT_EQ(set.negatives.size(), 1u);
  EXPECT_EQ(differing(tokenize(set.negatives[0]), tokenize(ex.answer)).size(), 1u);

  const auto zero = ToyBackend::zeros(f.vocab, 4);
  const auto sel = select_replacements(zero, f.vocab.encode_text(ex.answer), input, 0.75);
  EXPECT_TRUE(sel.fallback);
  EXPECT_EQ(sel.positions, std::vector<std::size_t>{0});
  for (double d : sel.delta) EXPECT_EQ(d, 0.0);
}

TEST(TokenReplace, DeterministicAndValidated) {
  const auto f = fixture();
  const auto& ex = f.examples[3];
  const auto input = encode_example(f.vocab, ex, Template::standard).input;
  ReplaceConfig cfg;
  cfg.m = 3;
  cfg.seed = 21;
  EXPECT_EQ(token_replace(f.scorer, ex, input, cfg).negatives, token_replace(f.scorer, ex, input, cfg).negatives);
  cfg.threshold = 0.0;
  EXPECT_THROW(token_replace(f.scorer, ex, input, cfg), std::invalid_argument);
  cfg.threshold = 0.75;
  cfg.k = 0;
  EXPECT_THROW(token_replace(f.scorer, ex, input, cfg), std::invalid_argument);
  EXPECT_THROW(select_replacements(f.scorer, std::vector<TokenId>{}, input, 0.75), std::invalid_argument);
}

TEST(ReplacementCandidates, ExcludesGoldAndSpecials) {
  // ranked: 5 (gold) then 6, 7; specials score highest but are skipped
  std::vector<double> lp{9, 9, 9, 9, 9, 3, 2, 1};
  EXPECT_EQ(replacement_candidates(lp, 5, 2), (std::vector<TokenId>{6}));
  EXPECT_EQ(replacement_candidates(lp, 5, 1), (std::vector<TokenId>{6}));  // k+1-th when gold fills top-k
  EXPECT_EQ(replacement_candidates(lp, 7, 3), (std::vector<TokenId>{5, 6}));
}
