#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dcl/metrics.hpp"
#include "oracles.hpp"

using namespace dcl;

namespace {

std::vector<ScoredPair> to_pairs(const std::vector<oracle::Pair>& f) {
  std::vector<ScoredPair> out;
  for (const auto& p : f) out.push_back({p.id, p.hyp, p.ref});
  return out;
}

}  // namespace

TEST(Bleu, CatMatAnchor) {
  const auto b = bleu({tokenize("the cat sat on the mat")}, {tokenize("the cat is on the mat")});
  EXPECT_NEAR(b[0], 5.0 / 6.0, 1e-12);
  EXPECT_NEAR(b[1], std::sqrt(5.0 / 6.0 * 0.6), 1e-12);
  EXPECT_NEAR(b[1], 0.70711, 5e-6);
}

TEST(Bleu, IdentityAndDisjoint) {
  const std::vector<TokenSequence> c{tokenize("a b c d e"), tokenize("f g h i")};
  for (double v : bleu(c, c)) EXPECT_DOUBLE_EQ(v, 1.0);
  const auto d = bleu({tokenize("x y z")}, {tokenize("a b c")});
  EXPECT_EQ(d[0], 0.0);
}

TEST(Bleu, ZeroPrecisionZeroesHigherOrders) {
  const auto b = bleu({tokenize("a x b y")}, {tokenize("a b c d")});
  EXPECT_GT(b[0], 0.0);
  EXPECT_EQ(b[1], 0.0);
  EXPECT_EQ(b[3], 0.0);
}

TEST(Bleu, RejectsMismatchedLists) {
  EXPECT_THROW(bleu({tokenize("a")}, {}), std::invalid_argument);
  EXPECT_THROW(bleu({}, {}), std::invalid_argument);
}

TEST(RougeL, FormulaAnchor) {
  // LCS 3, P 1, R 0.5 -> 2.44 * 0.5 / (0.5 + 1.44)
  const double v = rouge_l(tokenize("the cat sat"), tokenize("the cat sat on the mat"));
  EXPECT_NEAR(v, 1.22 / 1.94, 1e-12);
}

TEST(RougeL, IdentityDisjointEmpty) {
  EXPECT_DOUBLE_EQ(rouge_l(tokenize("a b c"), tokenize("a b c")), 1.0);
  EXPECT_EQ(rouge_l(tokenize("a b"), tokenize("c d")), 0.0);
  EXPECT_EQ(rouge_l({}, tokenize("c d")), 0.0);
}

TEST(Meteor, IdentityFourTokens) {
  const auto t = tokenize("w x y z");
  EXPECT_DOUBLE_EQ(meteor_lite(t, t), 0.9921875);
  const auto a = meteor_align(t, t);
  EXPECT_EQ(a.matches, 4);
  EXPECT_EQ(a.chunks, 1);
}

TEST(Meteor, StemStageMatchesInflection) {
  const auto a = meteor_align(tokenize("he runs home"), tokenize("he running home"));
  EXPECT_EQ(a.matches, 3);
  EXPECT_EQ(a.chunks, 1);
  EXPECT_EQ(meteor_lite(tokenize("x y"), tokenize("z w")), 0.0);
}

TEST(Meteor, PrefersFewerChunksAmongMaximalAlignments) {
  // "the" can align to either occurrence; the adjacent one keeps one chunk.
  const auto h = tokenize("the cat the mat"), r = tokenize("the mat the cat");
  const auto [m, c] = oracle::meteor_alignment(h, r);
  const auto a = meteor_align(h, r);
  EXPECT_EQ(a.matches, m);
  EXPECT_EQ(a.chunks, c);
  EXPECT_EQ(c, 2);
}

TEST(Cider, IdentityUniqueNgrams) {
  const std::vector<TokenSequence> refs{tokenize("alpha beta gamma delta"), tokenize("epsilon zeta eta theta")};
  EXPECT_NEAR(cider(refs, refs), 10.0, 1e-12);
}

TEST(Cider, DisjointIsZeroAndSingleDocumentRejected) {
  const std::vector<TokenSequence> refs{tokenize("alpha beta"), tokenize("gamma delta")};
  EXPECT_EQ(cider({tokenize("gamma delta"), tokenize("alpha beta")}, refs), 0.0);
  EXPECT_THROW(cider({tokenize("a")}, {tokenize("a")}), std::invalid_argument);
  EXPECT_THROW(cider({tokenize("a"), tokenize("a")}, {tokenize("a"), tokenize("a")}), std::invalid_argument);
}

TEST(Cider, ThreeDocumentOverlapMatchesOracle) {
  const std::vector<TokenSequence> hyps{tokenize("the cats sat on a mat"), tokenize("a dog runs home"),
                                        tokenize("the cat is running")};
  const std::vector<TokenSequence> refs{tokenize("the cat sat on the mat"), tokenize("the dog ran home"),
                                        tokenize("a cat runs quickly")};
  EXPECT_NEAR(cider(hyps, refs), oracle::cider(hyps, refs), 1e-9);
}

TEST(Oracle, TwentyPairFixtureAllMetrics) {
  const auto fixture = oracle::metric_fixture();
  ASSERT_EQ(fixture.size(), 20u);
  std::vector<TokenSequence> hyps, refs;
  for (const auto& p : fixture) {
    hyps.push_back(tokenize(p.hyp));
    refs.push_back(tokenize(p.ref));
  }
  const auto b = bleu(hyps, refs), ob = oracle::bleu(hyps, refs);
  for (std::size_t n = 0; n < 4; ++n) EXPECT_NEAR(b[n], ob[n], 1e-9) << "bleu-" << n + 1;
  EXPECT_GT(b[1], 0.0);

  double r = 0, orr = 0, m = 0, om = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    EXPECT_NEAR(rouge_l(hyps[i], refs[i]), oracle::rouge_l(hyps[i], refs[i]), 1e-12) << i;
    EXPECT_NEAR(meteor_lite(hyps[i], refs[i]), oracle::meteor(hyps[i], refs[i]), 1e-12) << i;
    r += rouge_l(hyps[i], refs[i]);
    orr += oracle::rouge_l(hyps[i], refs[i]);
    m += meteor_lite(hyps[i], refs[i]);
    om += oracle::meteor(hyps[i], refs[i]);
  }
  EXPECT_NEAR(cider(hyps, refs), oracle::cider(hyps, refs), 1e-9);

  const auto rep = score_corpus(to_pairs(fixture));
  EXPECT_NEAR(rep.rouge_l, orr / 20, 1e-9);
  EXPECT_NEAR(rep.meteor, om / 20, 1e-9);
  ASSERT_TRUE(rep.cider);
  EXPECT_NEAR(*rep.cider, oracle::cider(hyps, refs), 1e-9);
  for (std::size_t n = 0; n < 4; ++n) EXPECT_NEAR(rep.bleu[n], ob[n], 1e-9);
}

TEST(Properties, CaseAndTrailingWhitespaceInvariance) {
  auto f = oracle::metric_fixture();
  auto g = f;
  for (auto& p : g) {
    std::transform(p.hyp.begin(), p.hyp.end(), p.hyp.begin(), [](unsigned char c) { return std::toupper(c); });
    p.ref += "   \t";
  }
  const auto a = score_corpus(to_pairs(f)), b = score_corpus(to_pairs(g));
  EXPECT_EQ(a.bleu, b.bleu);
  EXPECT_EQ(a.meteor, b.meteor);
  EXPECT_EQ(a.rouge_l, b.rouge_l);
  EXPECT_EQ(a.cider, b.cider);
}

TEST(Properties, PermutationInvariance) {
  auto f = oracle::metric_fixture();
  const auto a = score_corpus(to_pairs(f));
  std::reverse(f.begin(), f.end());
  std::rotate(f.begin(), f.begin() + 7, f.end());
  const auto b = score_corpus(to_pairs(f));
  for (std::size_t n = 0; n < 4; ++n) EXPECT_NEAR(a.bleu[n], b.bleu[n], 1e-12);
  EXPECT_NEAR(a.meteor, b.meteor, 1e-12);
  EXPECT_NEAR(a.rouge_l, b.rouge_l, 1e-12);
  EXPECT_NEAR(*a.cider, *b.cider, 1e-12);
}

TEST(Properties, SelfScoreMaximum) {
  for (std::size_t m = 1; m <= 6; ++m) {
    TokenSequence t;
    for (std::size_t i = 0; i < m; ++i) t.push_back("w" + std::to_string(i));
    EXPECT_NEAR(meteor_lite(t, t), 1.0 - 0.5 / static_cast<double>(m * m * m), 1e-15);
    EXPECT_DOUBLE_EQ(rouge_l(t, t), 1.0);
  }
}

TEST(ScoreCorpus, StrataAreSubsetRecomputations) {
  const auto f = oracle::metric_fixture(6, 11);
  const auto pairs = to_pairs(f);
  const std::vector<std::string> labels{"sufficient", "likely", "conceivable", "likely", "sufficient", "conceivable"};
  std::map<std::string, std::string> lab;
  for (std::size_t i = 0; i < pairs.size(); ++i) lab[pairs[i].id] = labels[i];
  ScoreOptions opt;
  opt.strata_labels = lab;
  const auto rep = score_corpus(pairs, opt);
  ASSERT_EQ(rep.strata.size(), 3u);
  for (const auto& name : {"sufficient", "likely", "conceivable"}) {
    const auto* s = rep.stratum(name);
    ASSERT_NE(s, nullptr);
    EXPECT_EQ(s->count, 2u);
    std::vector<ScoredPair> subset;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (labels[i] == name) subset.push_back(pairs[i]);
    const auto alone = score_corpus(subset);
    EXPECT_EQ(s->bleu, alone.bleu);
    EXPECT_EQ(s->meteor, alone.meteor);
    EXPECT_EQ(s->rouge_l, alone.rouge_l);
    EXPECT_EQ(s->cider, alone.cider);
  }
}

TEST(ScoreCorpus, SingleStratumEqualsUnstratified) {
  const auto pairs = to_pairs(oracle::metric_fixture());
  std::map<std::string, std::string> lab;
  for (const auto& p : pairs) lab[p.id] = "all";
  ScoreOptions opt;
  opt.strata_labels = lab;
  const auto rep = score_corpus(pairs, opt);
  const auto* s = rep.stratum("all");
  ASSERT_NE(s, nullptr);
  EXPECT_EQ(s->bleu, rep.bleu);
  EXPECT_EQ(s->meteor, rep.meteor);
  EXPECT_EQ(s->rouge_l, rep.rouge_l);
  EXPECT_EQ(s->cider, rep.cider);
}

TEST(ScoreCorpus, UnknownLabelIdAndEmptyInputs) {
  const auto pairs = to_pairs(oracle::metric_fixture(4));
  ScoreOptions opt;
  opt.strata_labels = std::map<std::string, std::string>{{"nope", "x"}};
  EXPECT_THROW(score_corpus(pairs, opt), std::invalid_argument);
  EXPECT_THROW(score_corpus({}), std::invalid_argument);
  const auto rep = score_corpus({{"a", "", "x y"}, {"b", "x y", "x y"}});
  EXPECT_FALSE(rep.warnings.empty());
}

TEST(ScoreCorpus, RequiredEmptyStratumSerializesNulls) {
  const auto pairs = to_pairs(oracle::metric_fixture(4));
  std::map<std::string, std::string> lab;
  for (const auto& p : pairs) lab[p.id] = "sufficient";
  ScoreOptions opt;
  opt.strata_labels = lab;
  opt.required_strata = {"likely"};
  const auto j = to_json(score_corpus(pairs, opt));
  EXPECT_EQ(j["strata"]["likely"]["count"], 0);
  EXPECT_TRUE(j["strata"]["likely"]["bleu"].is_null());
  EXPECT_EQ(j["strata"]["sufficient"]["count"], 4);
}
