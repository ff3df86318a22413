#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "dcl/backend.hpp"

using namespace dcl;

namespace {

Vocabulary small_vocab() { return Vocabulary({"a", "b", "c"}); }  // 5 specials + 3 = 8

std::vector<double> hand_state(const ToyBackend& m, const std::vector<TokenId>& in, const std::vector<TokenId>& pre) {
  const auto& E = m.params().E;
  const std::size_t d = m.dim();
  std::vector<double> c(d, 0.0), p(d, 0.0), s(d);
  for (TokenId t : in)
    for (std::size_t k = 0; k < d; ++k) c[k] += E(static_cast<std::size_t>(t), k) / static_cast<double>(in.size());
  std::vector<TokenId> full{Vocabulary::kBos};
  full.insert(full.end(), pre.begin(), pre.end());
  for (TokenId t : full)
    for (std::size_t k = 0; k < d; ++k) p[k] += E(static_cast<std::size_t>(t), k) / static_cast<double>(full.size());
  for (std::size_t k = 0; k < d; ++k) s[k] = 0.5 * (c[k] + p[k]);
  return s;
}

}  // namespace

TEST(Vocabulary, SpecialsDenseAndUnk) {
  const auto v = Vocabulary::build({"b a", "c a"});
  EXPECT_EQ(v.size(), 8u);
  EXPECT_EQ(v.id("<pad>"), 0);
  EXPECT_EQ(v.id("<eos>"), Vocabulary::kEos);
  EXPECT_EQ(v.id("zzz"), Vocabulary::kUnk);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v.id(v.token(static_cast<TokenId>(i))), static_cast<TokenId>(i));
  EXPECT_EQ(v, Vocabulary({"a", "b", "c", "a"}));
}

TEST(ToyBackend, ZeroModelIsUniform) {
  const auto m = ToyBackend::zeros(small_vocab(), 4);
  const std::vector<TokenId> in{5, 6};
  for (double v : m.next_token_log_probs(in, {})) EXPECT_NEAR(v, -std::log(8.0), 1e-15);
  for (double v : m.masked_logits(in, 0, MaskCondition::answer_only)) EXPECT_NEAR(v, -std::log(8.0), 1e-15);
  EXPECT_NO_THROW(m.next_token_log_probs({}, {}));
}

TEST(ToyBackend, ForwardEquationsByHand) {
  const ToyBackend m(small_vocab(), 3, 5);
  const std::vector<TokenId> in{5, 7, 7}, pre{6};
  const auto s = hand_state(m, in, pre);
  std::vector<double> z(8);
  for (std::size_t v = 0; v < 8; ++v) {
    z[v] = m.params().b[v];
    for (std::size_t k = 0; k < 3; ++k) z[v] += m.params().U(v, k) * s[k];
  }
  double mx = *std::max_element(z.begin(), z.end()), sum = 0;
  for (double x : z) sum += std::exp(x - mx);
  const auto lp = m.next_token_log_probs(in, pre);
  for (std::size_t v = 0; v < 8; ++v) EXPECT_NEAR(lp[v], z[v] - mx - std::log(sum), 1e-12);
}

TEST(ToyBackend, LogDistributionsNormalized) {
  std::mt19937 rng(3);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const ToyBackend m(small_vocab(), 1 + seed % 6, seed);
    std::vector<TokenId> in, pre;
    for (int i = 0; i < static_cast<int>(rng() % 5); ++i) in.push_back(static_cast<TokenId>(rng() % 8));
    for (int i = 0; i < static_cast<int>(rng() % 4); ++i) pre.push_back(static_cast<TokenId>(rng() % 8));
    EXPECT_LT(std::abs(logsumexp(m.next_token_log_probs(in, pre))), 1e-6);
    if (!in.empty()) {
      EXPECT_LT(std::abs(logsumexp(m.masked_logits(in, 0, MaskCondition::answer_only))), 1e-6);
      EXPECT_LT(std::abs(logsumexp(m.masked_logits(in, 0, MaskCondition::with_context, pre))), 1e-6);
    }
  }
}

TEST(ToyBackend, BiasDominatesArgmax) {
  auto m = ToyBackend(small_vocab(), 4, 9);
  m.params().b[6] = 1e3;
  for (const std::vector<TokenId>& in : {std::vector<TokenId>{5}, std::vector<TokenId>{7, 7, 5}}) {
    const auto lp = m.next_token_log_probs(in, {});
    EXPECT_EQ(std::max_element(lp.begin(), lp.end()) - lp.begin(), 6);
  }
}

TEST(ToyBackend, SeededInitIsBitIdentical) {
  EXPECT_EQ(ToyBackend(small_vocab(), 6, 42), ToyBackend(small_vocab(), 6, 42));
  EXPECT_FALSE(ToyBackend(small_vocab(), 6, 42) == ToyBackend(small_vocab(), 6, 43));
}

TEST(EmbedText, SingleTokenOrderAndEmpty) {
  const ToyBackend m(small_vocab(), 5, 2);
  const std::vector<TokenId> one{6};
  const auto e = m.embed_text(one);
  const auto row = m.params().E.row(6);
  const double n = l2_norm(row);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(e.vector[k], row[k] / n, 1e-15);
  const std::vector<TokenId> ab{5, 6, 7}, ba{7, 5, 6};
  EXPECT_EQ(m.embed_text(ab).vector, m.embed_text(ba).vector);
  const auto z = m.embed_text({});
  EXPECT_TRUE(z.zero);
  EXPECT_EQ(l2_norm(z.vector), 0.0);
  EXPECT_NEAR(l2_norm(m.embed_text(ab).vector), 1.0, 1e-9);
}

TEST(MaskedLogits, NeverReadsMaskedToken) {
  const ToyBackend m(small_vocab(), 4, 8);
  const std::vector<TokenId> a{5, 6, 7}, b{5, 5, 7}, ctx{7, 7};
  EXPECT_EQ(m.masked_logits(a, 1, MaskCondition::answer_only), m.masked_logits(b, 1, MaskCondition::answer_only));
  EXPECT_NE(m.masked_logits(a, 1, MaskCondition::answer_only), m.masked_logits(a, 1, MaskCondition::with_context, ctx));
  EXPECT_THROW(m.masked_logits(a, 3, MaskCondition::answer_only), std::out_of_range);
}

TEST(Generate, ImmediateEosAndRiggedChain) {
  auto m = ToyBackend::zeros(small_vocab(), 2);
  m.params().b[Vocabulary::kEos] = 5.0;
  const std::vector<TokenId> in{5};
  EXPECT_TRUE(generate(m, in, {}).empty());

  // With zero E the state is zero, so logits equal b; the chain is argmax(b) forever.
  auto r = ToyBackend::zeros(small_vocab(), 2);
  r.params().b[7] = 2.0;
  DecodeOptions o;
  o.max_len = 3;
  EXPECT_EQ(generate(r, in, o), (std::vector<TokenId>{7, 7, 7}));

  // Lowest id wins ties: the all-zero model picks <pad>.
  EXPECT_EQ(generate(ToyBackend::zeros(small_vocab(), 2), in, o), (std::vector<TokenId>{0, 0, 0}));
}

TEST(Generate, PrefixDependentChain) {
  // Two-dim model where the prefix mean steers the next choice: after emitting
  // "a" the state favours "b", after "b" it favours <eos>.
  auto m = ToyBackend::zeros(small_vocab(), 2);
  auto& P = m.params();
  P.E.row(Vocabulary::kBos)[0] = 1.0;  // BOS -> x axis
  P.E.row(5)[1] = 3.0;                 // a pushes the mean onto y
  P.E.row(6)[0] = -4.0;                // b pulls x negative
  P.U.row(5)[0] = 1.0;                 // a likes +x
  P.U.row(6)[1] = 1.0;                 // b likes +y
  P.U.row(Vocabulary::kEos)[0] = -1.0; // eos likes -x
  const std::vector<TokenId> in;
  DecodeOptions o;
  o.max_len = 5;
  // step1: s=(0.5,0)   -> a. step2: p=(0.5,1.5), s=(0.25,0.75) -> b.
  // step3: p=((1-4)/3, 1), s=(-0.5,0.5) -> eos (0.5) ties b (0.5); lower id eos wins.
  EXPECT_EQ(generate(m, in, o), (std::vector<TokenId>{5, 6}));
}

TEST(Generate, TopKDegenerateAndDeterministic) {
  const ToyBackend m(small_vocab(), 4, 10);
  const std::vector<TokenId> in{5, 6};
  DecodeOptions g;
  g.max_len = 6;
  for (std::uint64_t s = 0; s < 5; ++s) {
    DecodeOptions t = g;
    t.method = DecodeMethod::top_k;
    t.k = 1;
    t.seed = s;
    EXPECT_EQ(generate(m, in, t), generate(m, in, g));
  }
  DecodeOptions t = g;
  t.method = DecodeMethod::top_k;
  t.k = 5;
  t.seed = 77;
  EXPECT_EQ(generate(m, in, t), generate(m, in, t));
  t.k = 0;
  EXPECT_THROW(generate(m, in, t), std::invalid_argument);
  t.k = 9;
  EXPECT_THROW(generate(m, in, t), std::invalid_argument);
  g.max_len = 0;
  EXPECT_THROW(generate(m, in, g), std::invalid_argument);
}

TEST(ApplyGradients, SgdSemantics) {
  const ToyBackend base(small_vocab(), 3, 4);
  auto g = base.zero_gradients();
  for (std::size_t i = 0; i < g.size(); ++i) g.flat(i) = 1.0;

  auto a = base;
  a.apply_gradients(g, 0.0);
  EXPECT_EQ(a, base);

  a.apply_gradients(g, 0.1);
  for (std::size_t i = 0; i < a.parameter_count(); ++i)
    EXPECT_NEAR(a.parameter(i), const_cast<ToyBackend&>(base).parameter(i) - 0.1, 1e-15);

  auto half = base;
  half.apply_gradients(g, 0.05);
  half.apply_gradients(g, 0.05);
  for (std::size_t i = 0; i < a.parameter_count(); ++i) EXPECT_NEAR(half.parameter(i), a.parameter(i), 1e-15);

  const ToyBackend other(Vocabulary({"a"}), 3, 4);
  EXPECT_THROW(a.apply_gradients(other.zero_gradients(), 0.1), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const ToyBackend m(small_vocab(), 5, 123);
  const auto dir = std::filesystem::temp_directory_path() / "dcl_backend_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "c.json", m, "abc");
  const auto loaded = load_checkpoint(dir / "c.json");
  EXPECT_EQ(loaded.model, m);
  EXPECT_EQ(loaded.config_digest, "abc");
  auto j = checkpoint_json(m, "abc");
  j["format"] = "other";
  EXPECT_THROW(checkpoint_from_json(j), ParseError);
  std::filesystem::remove_all(dir);
}
